#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "madda/data/usps.hpp"
#include "madda/errors.hpp"
#include "madda/models/networks.hpp"
#include "madda/numerics/random.hpp"
#include "madda/training/adapt.hpp"
#include "madda/training/source.hpp"

namespace madda::experiment {

inline constexpr const char* kDataRootEnv = "MADDA_DATA_ROOT";

// Text config: one `key = value` per line, `#` starts a comment. Values are
// kept as strings and validated when read through the typed accessors.
class ExperimentConfig {
 public:
  ExperimentConfig() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        {"source", "mnist"},
        {"target", "usps"},
        {"data_root", ""},
        {"subsample.mnist", "2000"},
        {"subsample.usps", "1800"},
        {"subsample.synthetic-thin", "full"},
        {"subsample.synthetic-bold", "full"},
        {"synthetic.train_size", "2000"},
        {"synthetic.test_size", "1000"},
        {"epochs_source", "200"},
        {"epochs_adapt", "200"},
        {"batch_size", "128"},
        {"lr", "0.0002"},
        {"beta1", "0.5"},
        {"beta2", "0.999"},
        {"eps", "1e-08"},
        {"margin", "1"},
        {"k", "5"},
        {"mode", "full"},
        {"schedule", "sequential"},
        {"granularity", "per-batch"},
        {"seed", "1"},
        {"output_dir", "runs/default"},
        {"checkpoint_every", "10"},
        {"eval_every", "1"},
    };
    return d;
  }

  // Keys that locate files or pace I/O and do not change results.
  static bool operational(const std::string& key) {
    return key == "data_root" || key == "output_dir" || key == "checkpoint_every" || key == "mnist.dir" ||
           key == "usps.dir";
  }

  static ExperimentConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    ExperimentConfig cfg;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto body = data::detail::trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos)
        throw UsageError(path.string() + ":" + std::to_string(n) + ": expected key = value");
      cfg.set(std::string(data::detail::trim(body.substr(0, eq))), std::string(data::detail::trim(body.substr(eq + 1))));
    }
    return cfg;
  }

  // "key=value" as given on the command line.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw UsageError("override '" + assignment + "' is not key=value");
    set(std::string(data::detail::trim(std::string_view(assignment).substr(0, eq))),
        std::string(data::detail::trim(std::string_view(assignment).substr(eq + 1))));
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw UsageError("unknown config key '" + key + "'");
    values_[key] = value;
    validate_key(key);
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second;
  }

  std::size_t get_size(const std::string& key) const {
    const std::string& v = get(key);
    std::size_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      throw UsageError("config key '" + key + "' must be a non-negative integer, got '" + v + "'");
    return out;
  }

  double get_double(const std::string& key) const {
    double out = 0;
    if (!data::detail::parse_double(get(key), out) || !std::isfinite(out))
      throw UsageError("config key '" + key + "' must be a number, got '" + get(key) + "'");
    return out;
  }

  std::uint64_t seed() const { return get_size("seed"); }

  // Number of training examples to draw for a domain; nullopt = all.
  std::optional<std::size_t> subsample(const std::string& domain) const {
    const std::string key = "subsample." + domain;
    if (!values_.count(key) || get(key) == "full") return std::nullopt;
    return get_size(key);
  }

  std::filesystem::path data_root() const {
    if (!get("data_root").empty()) return get("data_root");
    if (const char* env = std::getenv(kDataRootEnv)) return env;
    return {};
  }

  std::filesystem::path output_dir() const { return get("output_dir"); }

  numerics::AdamConfig adam() const {
    return {get_double("lr"), get_double("beta1"), get_double("beta2"), get_double("eps")};
  }

  training::TrainSchedule source_schedule() const {
    training::TrainSchedule s;
    s.epochs = get_size("epochs_source");
    s.batch_size = get_size("batch_size");
    s.seed = seed();
    s.adam = adam();
    s.margin = get_double("margin");
    s.granularity = get("granularity") == "per-triplet" ? training::Granularity::per_triplet
                                                          : training::Granularity::per_batch;
    return s;
  }

  training::AdaptSchedule adapt_schedule() const {
    training::AdaptSchedule s;
    s.epochs = get_size("epochs_adapt");
    s.batch_size = get_size("batch_size");
    s.seed = seed();
    s.adam = adam();
    s.mode = parse_mode(get("mode"));
    const std::string& sch = get("schedule");
    s.phases = sch == "interleaved" ? training::PhaseSchedule::interleaved
               : sch == "summed"    ? training::PhaseSchedule::summed
                                    : training::PhaseSchedule::sequential;
    return s;
  }

  static training::AdaptMode parse_mode(const std::string& m) {
    if (m == "full") return training::AdaptMode::full;
    if (m == "center-only") return training::AdaptMode::center_only;
    if (m == "adversarial-only") return training::AdaptMode::adversarial_only;
    throw UsageError("config key 'mode' must be full, center-only or adversarial-only, got '" + m + "'");
  }

  // Sorted key=value lines with numbers in a normal form; operational keys
  // are left out so that relocating a run does not change its identity.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
      if (operational(k)) continue;
      out += k + "=" + normalize(v) + "\n";
    }
    return out;
  }

  // Full dump including operational keys, re-readable by from_file.
  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  std::string hash(models::Role role) const {
    const std::string text = canonical() + "role=" + models::to_string(role) + "\n";
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_tag(text)));
    return buf;
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return a.canonical() == b.canonical(); }

 private:
  static bool known(const std::string& key) {
    // per-domain subsample sizes for any domain name
    return defaults().count(key) || key.rfind("subsample.", 0) == 0 || key == "mnist.dir" || key == "usps.dir";
  }

  // 1e-3, 0.001 and 0.0010 all read as the same number.
  static std::string normalize(const std::string& v) {
    double d = 0;
    if (!data::detail::parse_double(v, d) || !std::isfinite(d)) return v;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
  }

  void validate_key(const std::string& key) const {
    static const std::set<std::string> positive = {"epochs_source", "batch_size", "k", "eval_every"};
    static const std::set<std::string> sizes = {"epochs_source", "epochs_adapt", "batch_size", "k",
                                                "seed", "checkpoint_every", "eval_every",
                                                "synthetic.train_size", "synthetic.test_size"};
    if (sizes.count(key)) {
      const std::size_t v = get_size(key);
      if (positive.count(key) && v == 0) throw UsageError("config key '" + key + "' must be >= 1");
      if (key == "batch_size" && v < 2) throw UsageError("config key 'batch_size' must be >= 2");
    } else if (key == "lr" || key == "eps") {
      if (get_double(key) <= 0) throw UsageError("config key '" + key + "' must be > 0");
    } else if (key == "beta1" || key == "beta2") {
      const double b = get_double(key);
      if (b < 0 || b >= 1) throw UsageError("config key '" + key + "' must be in [0, 1)");
    } else if (key == "margin") {
      if (get_double(key) < 0) throw UsageError("config key 'margin' must be >= 0");
    } else if (key == "mode") {
      parse_mode(get(key));
    } else if (key == "schedule") {
      const auto& s = get(key);
      if (s != "sequential" && s != "interleaved" && s != "summed")
        throw UsageError("config key 'schedule' must be sequential, interleaved or summed, got '" + s + "'");
    } else if (key == "granularity") {
      const auto& s = get(key);
      if (s != "per-batch" && s != "per-triplet")
        throw UsageError("config key 'granularity' must be per-batch or per-triplet, got '" + s + "'");
    } else if (key.rfind("subsample.", 0) == 0) {
      if (get(key) != "full") get_size(key);
    } else if (key == "source" || key == "target") {
      if (get(key).empty()) throw UsageError("config key '" + key + "' must name a domain");
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace madda::experiment
