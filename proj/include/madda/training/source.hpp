#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "madda/data/dataset.hpp"
#include "madda/losses.hpp"
#include "madda/models/networks.hpp"
#include "madda/numerics/graph.hpp"
#include "madda/numerics/optimizer.hpp"
#include "madda/training/triplets.hpp"

namespace madda::training {

using models::ModelBundle;
using numerics::AdamConfig;

enum class Granularity { per_batch, per_triplet };

inline std::string to_string(Granularity g) { return g == Granularity::per_batch ? "per-batch" : "per-triplet"; }

struct TrainSchedule {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;
  AdamConfig adam{};
  double margin = 1.0;
  Granularity granularity = Granularity::per_batch;

  void validate() const {
    if (epochs < 1) throw ContractError("source training needs epochs >= 1");
    if (batch_size < 2) throw ContractError("batch size must be >= 2 to form triplets");
    losses::TripletConfig{margin}.validate();
  }
};

struct SourceEpochStats {
  std::size_t epoch = 0;
  // Mean per-triplet loss, each triplet measured before the step that uses it.
  double mean_triplet_loss = 0.0;
  std::size_t triplets = 0;
  std::size_t active_triplets = 0;
  std::size_t steps = 0;
  std::size_t skipped_batches = 0;
};

// Triplet-loss training of the embedding model on the labeled source domain.
class SourceTrainer {
 public:
  SourceTrainer(ModelBundle& model, TrainSchedule schedule)
      : model_(model), schedule_(schedule), optimizer_(model.parameters(), schedule.adam) {
    schedule_.validate();
  }

  SourceEpochStats run_epoch(const data::LabeledDataset& data) {
    if (data.empty()) throw ContractError("source training on an empty dataset");
    SourceEpochStats stats;
    stats.epoch = epoch_;
    double total = 0.0;
    const auto index_batches = data::batch_indices(data.size(), schedule_.batch_size, schedule_.seed, epoch_);
    for (std::size_t b = 0; b < index_batches.size(); ++b) {
      const data::Batch batch = data::make_batch(data, index_batches[b]);
      const auto triplets = mine_triplets(batch.labels, derive_seed(schedule_.seed, "triplets", epoch_, b));
      if (triplets.empty()) {
        ++stats.skipped_batches;
        continue;
      }
      if (schedule_.granularity == Granularity::per_batch) {
        total += step(batch.images, triplets, stats);
      } else {
        for (const auto& t : triplets) total += step(batch.images, {t}, stats);
      }
      stats.triplets += triplets.size();
    }
    stats.mean_triplet_loss = stats.triplets ? total / static_cast<double>(stats.triplets) : 0.0;
    ++epoch_;
    return stats;
  }

  // Summed loss over `triplets` under the current parameters, no update.
  double evaluate(const Tensor& images, const std::vector<Triplet>& triplets) const {
    numerics::Graph g;
    const auto& frozen = std::as_const(model_);
    const auto emb = models::decode(g, frozen.decoder, models::encode(g, frozen.encoder, g.input("images", images)));
    return static_cast<double>(loss_node(g, emb, triplets).value);
  }

  std::size_t epoch() const noexcept { return epoch_; }
  const numerics::Adam& optimizer() const noexcept { return optimizer_; }
  numerics::Adam& optimizer() noexcept { return optimizer_; }
  void set_epoch(std::size_t e) noexcept { epoch_ = e; }
  const TrainSchedule& schedule() const noexcept { return schedule_; }

 private:
  losses::LossValue<float> loss_node(numerics::Graph& g, numerics::NodeId emb,
                                     const std::vector<Triplet>& triplets) const {
    std::vector<std::size_t> a, p, n;
    for (const auto& t : triplets) {
      a.push_back(t.anchor);
      p.push_back(t.positive);
      n.push_back(t.negative);
    }
    return losses::triplet_loss(g, g.gather_rows(emb, std::move(a)), g.gather_rows(emb, std::move(p)),
                                g.gather_rows(emb, std::move(n)), static_cast<float>(schedule_.margin));
  }

  double step(const Tensor& images, const std::vector<Triplet>& triplets, SourceEpochStats& stats) {
    numerics::Graph g;
    numerics::NodeId x;
    if (triplets.size() == 1) {
      // Only the three images involved.
      const auto& t = triplets[0];
      Tensor three(Shape{3, 1, data::kImageSide, data::kImageSide});
      std::size_t r = 0;
      for (std::size_t src : {t.anchor, t.positive, t.negative}) {
        const auto row = images.row(src);
        std::copy(row.begin(), row.end(), three.row(r++).begin());
      }
      x = g.input("images", std::move(three));
    } else {
      x = g.input("images", images);
    }
    const auto emb = models::decode(g, model_.decoder, models::encode(g, model_.encoder, x));
    const auto loss = triplets.size() == 1 ? loss_node(g, emb, {Triplet{0, 1, 2}}) : loss_node(g, emb, triplets);
    const auto& hinge = g.value(g.inputs_of(loss.node)[0]);
    for (float h : hinge.data()) stats.active_triplets += h > 0.0f;
    optimizer_.zero_grad();
    g.backward(loss.node);
    optimizer_.step();
    ++stats.steps;
    return static_cast<double>(loss.value);
  }

  ModelBundle& model_;
  TrainSchedule schedule_;
  numerics::Adam optimizer_;
  std::size_t epoch_ = 0;
};

}  // namespace madda::training
