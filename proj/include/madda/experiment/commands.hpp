#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "madda/experiment/config.hpp"
#include "madda/experiment/datasets.hpp"
#include "madda/experiment/metrics.hpp"
#include "madda/inference/embed.hpp"
#include "madda/inference/knn.hpp"
#include "madda/models/checkpoint.hpp"
#include "madda/training/adapt.hpp"
#include "madda/training/centers.hpp"
#include "madda/training/source.hpp"

namespace madda::experiment {

namespace fs = std::filesystem;

struct RunPaths {
  fs::path dir;
  fs::path source_checkpoint() const { return dir / "source.ckpt"; }
  fs::path source_metrics() const { return dir / "source_metrics.jsonl"; }
  fs::path adapt_checkpoint() const { return dir / "adapt.ckpt"; }
  fs::path adapt_metrics() const { return dir / "adapt_metrics.jsonl"; }
  fs::path config_copy() const { return dir / "config.txt"; }
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void prepare_output(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir(), ec);
  if (ec) throw IoError("cannot create output directory " + cfg.output_dir().string() + ": " + ec.message());
  std::ofstream(RunPaths{cfg.output_dir()}.config_copy(), std::ios::trunc) << cfg.serialize();
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace detail

// ---- evaluation -------------------------------------------------------------

struct TargetScore {
  double accuracy = 0.0;
  // Target-test embeddings grouped by nearest source center: mean of the
  // per-group mean distance to that center.
  double center_distance = 0.0;
};

// kNN evaluation of a target model against fixed source references.
class Evaluator {
 public:
  Evaluator(inference::EmbeddingSet reference, data::LabeledDataset target_test, std::size_t k)
      : reference_(std::move(reference)), test_(std::move(target_test)), k_(k) {
    centers_ = training::compute_cluster_centers(reference_.embeddings, reference_.labels);
  }

  TargetScore score(const models::ModelBundle& target) const {
    const auto query = inference::embed_dataset(target, test_);
    const auto pred = inference::knn_predict(query, reference_, k_);
    return {inference::accuracy(pred, test_.labels), center_distance(query)};
  }

  double center_distance(const inference::EmbeddingSet& query) const {
    const std::size_t kc = centers_.size();
    std::vector<double> sum(kc, 0.0);
    std::vector<std::size_t> count(kc, 0);
    for (std::size_t i = 0; i < query.size(); ++i) {
      double best = INFINITY;
      std::size_t arg = 0;
      for (std::size_t c = 0; c < kc; ++c) {
        const double d = inference::squared_distance(query.embeddings.row(i), centers_.centers.row(c));
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      sum[arg] += std::sqrt(best);
      ++count[arg];
    }
    double total = 0.0;
    std::size_t groups = 0;
    for (std::size_t c = 0; c < kc; ++c)
      if (count[c]) {
        total += sum[c] / static_cast<double>(count[c]);
        ++groups;
      }
    return groups ? total / static_cast<double>(groups) : 0.0;
  }

  const inference::EmbeddingSet& reference() const noexcept { return reference_; }
  const data::LabeledDataset& test_data() const noexcept { return test_; }
  const training::ClusterCenters& centers() const noexcept { return centers_; }

 private:
  inference::EmbeddingSet reference_;
  data::LabeledDataset test_;
  std::size_t k_;
  training::ClusterCenters centers_;
};

// ---- train-source -------------------------------------------------------------

struct SourceResult {
  models::ModelBundle model;
  std::vector<training::SourceEpochStats> history;
  fs::path checkpoint;
};

inline void save_source(const fs::path& path, models::ModelBundle& model, const training::SourceTrainer& trainer,
                        const ExperimentConfig& cfg) {
  models::Checkpoint ck;
  models::store(ck, model, "model.");
  models::store(ck, trainer.optimizer(), "opt");
  ck.metadata["kind"] = "source";
  ck.metadata["epoch"] = std::to_string(trainer.epoch());
  ck.metadata["seed"] = std::to_string(cfg.seed());
  ck.metadata["domain"] = cfg.get("source");
  ck.metadata["config_hash"] = cfg.hash(models::Role::source);
  models::save_checkpoint(ck, path);
}

inline SourceResult train_source(const ExperimentConfig& cfg, std::ostream& progress) {
  const auto schedule = cfg.source_schedule();
  schedule.validate();
  const auto data = training_set(cfg, cfg.get("source"));
  detail::prepare_output(cfg);
  const RunPaths paths{cfg.output_dir()};
  const std::string hash = cfg.hash(models::Role::source);

  SourceResult result{models::build_model(derive_seed(cfg.seed(), "model")), {}, paths.source_checkpoint()};
  training::SourceTrainer trainer(result.model, schedule);
  MetricsLog log(paths.source_metrics());
  const std::size_t every = cfg.get_size("checkpoint_every");
  detail::Stopwatch clock;
  progress << "train-source: " << data.size() << " " << data.domain << " images, " << schedule.epochs
           << " epochs, config " << hash << "\n";
  for (std::size_t e = 1; e <= schedule.epochs; ++e) {
    const auto st = trainer.run_epoch(data);
    result.history.push_back(st);
    Record r;
    r["epoch"] = e;
    r["phase"] = "source";
    r["triplet_loss"] = st.mean_triplet_loss;
    r["triplets"] = st.triplets;
    r["active_triplets"] = st.active_triplets;
    r["skipped_batches"] = st.skipped_batches;
    r["wall_clock_s"] = clock.seconds();
    r["config_hash"] = hash;
    log.write(r);
    progress << "  epoch " << e << "  triplet " << detail::fixed(st.mean_triplet_loss) << "  active "
             << st.active_triplets << "/" << st.triplets << "  " << detail::fixed(clock.seconds(), 1) << "s\n";
    if ((every && e % every == 0) || e == schedule.epochs) save_source(paths.source_checkpoint(), result.model, trainer, cfg);
  }
  return result;
}

inline models::ModelBundle load_source_model(const fs::path& path) {
  const auto ck = models::load_checkpoint(path);
  auto m = models::restore_bundle(ck, "model.");
  m.role = models::Role::source;
  return m;
}

// ---- adapt --------------------------------------------------------------------

struct AdaptResult {
  models::ModelBundle target;
  double baseline_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::size_t epochs_run = 0;
  std::vector<training::AdaptEpochStats> history;
  fs::path checkpoint;
};

namespace detail {

inline void save_adapt(const fs::path& path, models::ModelBundle& target, models::Discriminator& disc,
                       training::Adapter& adapter, const ExperimentConfig& cfg, double baseline) {
  models::Checkpoint ck;
  models::store(ck, target, "target.");
  models::store(ck, disc.parameters(), "discriminator.");
  models::store(ck, adapter.discriminator_optimizer(), "opt.discriminator");
  models::store(ck, adapter.encoder_optimizer(), "opt.encoder");
  models::store(ck, adapter.model_optimizer(), "opt.model");
  ck.metadata["kind"] = "adapt";
  ck.metadata["epoch"] = std::to_string(adapter.epoch());
  ck.metadata["seed"] = std::to_string(cfg.seed());
  ck.metadata["mode"] = cfg.get("mode");
  ck.metadata["config_hash"] = cfg.hash(models::Role::target);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", baseline);
  ck.metadata["baseline_accuracy"] = buf;
  models::save_checkpoint(ck, path);
}

}  // namespace detail

// Loads the target model from an adapt checkpoint (or a source checkpoint,
// which then stands in for an unadapted target).
inline models::ModelBundle load_target_model(const fs::path& path) {
  const auto ck = models::load_checkpoint(path);
  if (ck.has("target.decoder.weight")) return models::restore_bundle(ck, "target.");
  auto m = models::restore_bundle(ck, "model.");
  return models::init_target_from_source(m);
}

// `max_epochs` caps the epochs run by this call (a checkpoint is written
// when it stops early); a later call with resume = true picks up from there.
inline AdaptResult adapt(const ExperimentConfig& cfg, const fs::path& source_checkpoint, bool resume,
                         std::ostream& progress, std::optional<std::size_t> max_epochs = std::nullopt) {
  const auto schedule = cfg.adapt_schedule();
  const std::size_t k = cfg.get_size("k");
  const models::ModelBundle source = load_source_model(source_checkpoint);
  const auto source_data = training_set(cfg, cfg.get("source"));
  const auto target_data = training_set(cfg, cfg.get("target"));
  auto target_test = test_set(cfg, cfg.get("target"));
  detail::prepare_output(cfg);
  const RunPaths paths{cfg.output_dir()};
  const std::string hash = cfg.hash(models::Role::target);

  AdaptResult result{models::init_target_from_source(source), 0.0, 0.0, 0, {}, paths.adapt_checkpoint()};
  auto disc = models::build_discriminator(derive_seed(cfg.seed(), "discriminator"));
  training::Adapter adapter(source, result.target, disc, source_data, target_data, schedule);
  inference::EmbeddingSet reference;
  reference.embeddings = adapter.source_embeddings();
  reference.labels = source_data.labels;
  reference.domain = source_data.domain;
  const Evaluator eval(std::move(reference), std::move(target_test), k);

  long keep = -1;
  if (resume && fs::exists(paths.adapt_checkpoint())) {
    const auto ck = models::load_checkpoint(paths.adapt_checkpoint());
    if (ck.meta("config_hash") != hash)
      throw UsageError("cannot resume: " + paths.adapt_checkpoint().string() + " was written by config " +
                       ck.meta("config_hash") + ", current config is " + hash);
    models::restore(ck, result.target.parameters(), "target.");
    models::restore(ck, disc.parameters(), "discriminator.");
    models::restore(ck, adapter.discriminator_optimizer(), "opt.discriminator");
    models::restore(ck, adapter.encoder_optimizer(), "opt.encoder");
    models::restore(ck, adapter.model_optimizer(), "opt.model");
    adapter.set_epoch(std::stoul(ck.meta("epoch")));
    result.baseline_accuracy = std::stod(ck.meta("baseline_accuracy"));
    keep = static_cast<long>(adapter.epoch());
    progress << "adapt: resuming at epoch " << adapter.epoch() << "\n";
  }
  MetricsLog log(paths.adapt_metrics(), keep);
  detail::Stopwatch clock;
  if (keep < 0) {
    const auto base = eval.score(result.target);
    result.baseline_accuracy = base.accuracy;
    Record r;
    r["epoch"] = 0;
    r["phase"] = "baseline";
    r["mode"] = cfg.get("mode");
    r["accuracy"] = base.accuracy;
    r["center_distance"] = base.center_distance;
    r["wall_clock_s"] = clock.seconds();
    r["config_hash"] = hash;
    log.write(r);
    progress << "adapt: " << source_data.domain << " -> " << target_data.domain << " (" << cfg.get("mode")
             << "), source-only accuracy " << detail::fixed(base.accuracy) << "\n";
  }

  const std::size_t every = cfg.get_size("checkpoint_every");
  const std::size_t eval_every = cfg.get_size("eval_every");
  result.final_accuracy = result.baseline_accuracy;
  while (adapter.epoch() < schedule.epochs && (!max_epochs || result.epochs_run < *max_epochs)) {
    const auto st = adapter.run_epoch();
    const std::size_t e = adapter.epoch();
    result.history.push_back(st);
    ++result.epochs_run;
    Record r;
    r["epoch"] = e;
    r["phase"] = "adapt";
    r["mode"] = cfg.get("mode");
    r["discriminator_loss"] = st.discriminator_loss;
    r["generator_loss"] = st.generator_loss;
    r["center_loss"] = st.center_loss;
    r["discriminator_accuracy"] = st.discriminator_accuracy;
    r["saturated"] = st.saturated;
    std::string acc_text;
    if (e % eval_every == 0 || e == schedule.epochs) {
      const auto score = eval.score(result.target);
      r["accuracy"] = score.accuracy;
      r["center_distance"] = score.center_distance;
      result.final_accuracy = score.accuracy;
      acc_text = "  acc " + detail::fixed(score.accuracy);
    }
    r["wall_clock_s"] = clock.seconds();
    r["config_hash"] = hash;
    log.write(r);
    progress << "  epoch " << e << "  D " << detail::fixed(st.discriminator_loss) << "  G "
             << detail::fixed(st.generator_loss) << "  C " << detail::fixed(st.center_loss) << acc_text << "  "
             << detail::fixed(clock.seconds(), 1) << "s\n";
    const bool stopping = max_epochs && result.epochs_run == *max_epochs;
    if ((every && e % every == 0) || e == schedule.epochs || stopping)
      detail::save_adapt(paths.adapt_checkpoint(), result.target, disc, adapter, cfg, result.baseline_accuracy);
  }
  if (result.epochs_run == 0) {
    // nothing left to run (epochs = 0 or already complete): score what we have
    result.final_accuracy = eval.score(result.target).accuracy;
    if (keep < 0 || !fs::exists(paths.adapt_checkpoint()))
      detail::save_adapt(paths.adapt_checkpoint(), result.target, disc, adapter, cfg, result.baseline_accuracy);
  }
  return result;
}

// ---- eval ---------------------------------------------------------------------

struct EvalReport {
  std::vector<std::pair<std::size_t, double>> accuracy_by_k;
  inference::ConfusionMatrix confusion{};
  std::size_t k = 0;
  double accuracy = 0.0;
  std::size_t test_size = 0;
};

inline EvalReport evaluate(const ExperimentConfig& cfg, const fs::path& source_checkpoint,
                           const std::optional<fs::path>& target_checkpoint, std::vector<std::size_t> ks,
                           const std::optional<fs::path>& export_path) {
  const auto source = load_source_model(source_checkpoint);
  const auto target = target_checkpoint ? load_target_model(*target_checkpoint) : models::init_target_from_source(source);
  const auto source_data = training_set(cfg, cfg.get("source"));
  const auto test = test_set(cfg, cfg.get("target"));
  const auto reference = inference::embed_dataset(source, source_data);
  const auto query = inference::embed_dataset(target, test);
  EvalReport rep;
  rep.k = cfg.get_size("k");
  rep.test_size = test.size();
  if (ks.empty()) ks.push_back(rep.k);
  for (std::size_t k : ks) {
    const auto pred = inference::knn_predict(query, reference, k);
    const double acc = inference::accuracy(pred, test.labels);
    rep.accuracy_by_k.emplace_back(k, acc);
    if (k == rep.k || k == ks.front()) {
      rep.confusion = inference::confusion_matrix(pred.labels, test.labels);
      rep.accuracy = acc;
    }
  }
  if (export_path) {
    const auto centers = training::compute_cluster_centers(reference.embeddings, reference.labels);
    inference::export_embeddings(std::vector<inference::EmbeddingSet>{reference, query},
                                 inference::CenterRows{centers.centers, centers.class_labels}, *export_path);
  }
  return rep;
}

inline void print_report(const EvalReport& rep, std::ostream& os) {
  for (const auto& [k, acc] : rep.accuracy_by_k) os << "k=" << k << " accuracy " << detail::fixed(acc) << "\n";
  os << "confusion (rows = true label, columns = predicted), " << rep.test_size << " examples\n";
  os << "     ";
  for (int c = 0; c < data::kNumClasses; ++c) os << std::setw(6) << c;
  os << "\n";
  for (int t = 0; t < data::kNumClasses; ++t) {
    os << std::setw(5) << t;
    for (int p = 0; p < data::kNumClasses; ++p) os << std::setw(6) << rep.confusion[t][p];
    os << "\n";
  }
}

// ---- ablate -------------------------------------------------------------------

struct AblationCell {
  std::string direction;
  std::string mode;
  double accuracy = 0.0;
  double baseline = 0.0;
};

inline const std::vector<std::string>& ablation_modes() {
  static const std::vector<std::string> modes = {"center-only", "adversarial-only", "full"};
  return modes;
}

inline void write_ablation_table(const fs::path& dir, const std::vector<AblationCell>& cells, const std::string& hash) {
  Record j;
  j["config_hash"] = hash;
  j["cells"] = Record::array();
  std::vector<std::string> directions;
  for (const auto& c : cells) {
    j["cells"].push_back({{"direction", c.direction}, {"mode", c.mode}, {"accuracy", c.accuracy},
                          {"source_only", c.baseline}});
    if (std::find(directions.begin(), directions.end(), c.direction) == directions.end())
      directions.push_back(c.direction);
  }
  {
    std::ofstream out(dir / "ablation.json", std::ios::trunc);
    out << j.dump(2) << "\n";
  }
  std::ofstream csv(dir / "ablation.csv", std::ios::trunc);
  csv << "mode";
  for (const auto& d : directions) csv << "," << d;
  csv << "\n";
  for (const auto& m : ablation_modes()) {
    csv << m;
    for (const auto& d : directions) {
      csv << ",";
      for (const auto& c : cells)
        if (c.direction == d && c.mode == m) csv << detail::fixed(c.accuracy);
    }
    csv << "\n";
  }
  if (!csv) throw IoError("error writing " + (dir / "ablation.csv").string());
}

// Three modes per direction; each direction trains its source model once.
// Finished cells are skipped on a rerun, so an interrupted sweep continues.
inline std::vector<AblationCell> ablate(const ExperimentConfig& cfg, bool single_direction, std::ostream& progress) {
  std::vector<std::pair<std::string, std::string>> directions = {{cfg.get("source"), cfg.get("target")}};
  if (!single_direction) directions.emplace_back(cfg.get("target"), cfg.get("source"));
  detail::prepare_output(cfg);
  std::vector<AblationCell> cells;
  for (const auto& [src, tgt] : directions) {
    const std::string name = src + "->" + tgt;
    ExperimentConfig dcfg = cfg;
    dcfg.set("source", src);
    dcfg.set("target", tgt);
    const fs::path ddir = cfg.output_dir() / (src + "-to-" + tgt);
    dcfg.set("output_dir", ddir.string());
    const RunPaths dpaths{ddir};
    bool have_source = false;
    if (fs::exists(dpaths.source_checkpoint())) {
      const auto ck = models::load_checkpoint(dpaths.source_checkpoint());
      have_source = ck.meta("config_hash") == dcfg.hash(models::Role::source) &&
                    ck.meta("epoch") == dcfg.get("epochs_source");
    }
    if (!have_source) train_source(dcfg, progress);
    for (const auto& mode : ablation_modes()) {
      ExperimentConfig mcfg = dcfg;
      mcfg.set("mode", mode);
      mcfg.set("output_dir", (ddir / mode).string());
      const auto res = adapt(mcfg, dpaths.source_checkpoint(), true, progress);
      cells.push_back({name, mode, res.final_accuracy, res.baseline_accuracy});
      write_ablation_table(cfg.output_dir(), cells, cfg.hash(models::Role::target));
      progress << "ablate: " << name << " " << mode << " accuracy " << detail::fixed(res.final_accuracy) << "\n";
    }
  }
  return cells;
}

}  // namespace madda::experiment
