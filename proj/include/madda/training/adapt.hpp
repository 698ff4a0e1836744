#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "madda/data/dataset.hpp"
#include "madda/errors.hpp"
#include "madda/inference/embed.hpp"
#include "madda/losses.hpp"
#include "madda/models/networks.hpp"
#include "madda/numerics/optimizer.hpp"
#include "madda/training/centers.hpp"

namespace madda::training {

using models::Discriminator;
using models::ModelBundle;

enum class AdaptMode { full, center_only, adversarial_only };
// sequential: all adversarial steps, then all center steps, each epoch.
// interleaved: per paired batch, D step, encoder step, center step.
// summed: per paired batch, D step, then one step on generator + center loss.
enum class PhaseSchedule { sequential, interleaved, summed };

inline std::string to_string(AdaptMode m) {
  switch (m) {
    case AdaptMode::full: return "full";
    case AdaptMode::center_only: return "center-only";
    case AdaptMode::adversarial_only: return "adversarial-only";
  }
  return "?";
}

inline std::string to_string(PhaseSchedule s) {
  switch (s) {
    case PhaseSchedule::sequential: return "sequential";
    case PhaseSchedule::interleaved: return "interleaved";
    case PhaseSchedule::summed: return "summed";
  }
  return "?";
}

struct AdaptSchedule {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;
  numerics::AdamConfig adam{};
  AdaptMode mode = AdaptMode::full;
  PhaseSchedule phases = PhaseSchedule::sequential;

  bool adversarial() const { return mode != AdaptMode::center_only; }
  bool center() const { return mode != AdaptMode::adversarial_only; }

  void validate() const {
    if (batch_size < 1) throw ContractError("adaptation batch size must be >= 1");
  }
};

struct AdaptEpochStats {
  std::size_t epoch = 0;
  // Means per example, measured before the step that uses them.
  double discriminator_loss = 0.0;
  double generator_loss = 0.0;
  double center_loss = 0.0;
  std::size_t discriminator_steps = 0;
  std::size_t generator_steps = 0;
  std::size_t center_steps = 0;
  // Logits whose sigmoid rounds to exactly 0 or 1 in single precision.
  std::size_t saturated = 0;
  // Fraction of source / target features the discriminator labels correctly.
  double discriminator_accuracy = 0.0;
};

// Endless sequence of index batches: a fresh shuffle each time the previous
// one is used up, so the shorter domain can be recycled within an epoch.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch)
      : n_(n), batch_size_(batch_size), seed_(seed), epoch_(epoch) {}

  const std::vector<std::size_t>& next() {
    if (pos_ == current_.size()) {
      current_ = data::batch_indices(n_, batch_size_, derive_seed(seed_, "stream", epoch_), cycle_++);
      pos_ = 0;
    }
    return current_[pos_++];
  }
  std::size_t batches_per_pass() const { return (n_ + batch_size_ - 1) / batch_size_; }

 private:
  std::size_t n_, batch_size_;
  std::uint64_t seed_, epoch_;
  std::uint64_t cycle_ = 0;
  std::vector<std::vector<std::size_t>> current_;
  std::size_t pos_ = 0;
};

// FNV-1a over parameter bytes; used to prove the source model stays frozen.
inline std::uint64_t parameter_fingerprint(const ParameterRefs<float>& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto* p : params) {
    for (char c : p->name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
    for (float v : p->value.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      h = (h ^ bits) * 1099511628211ull;
    }
  }
  return h;
}

// Target-domain adaptation against a frozen source model. Source features
// and embeddings are computed once up front.
class Adapter {
 public:
  Adapter(const ModelBundle& source, ModelBundle& target, Discriminator& discriminator,
          const data::LabeledDataset& source_data, const data::LabeledDataset& target_data, AdaptSchedule schedule)
      : source_(source),
        target_(target),
        disc_(discriminator),
        source_data_(source_data),
        target_data_(target_data),
        schedule_(schedule),
        disc_opt_(discriminator.parameters(), schedule.adam),
        encoder_opt_(target.encoder_parameters(), schedule.adam),
        model_opt_(target.parameters(), schedule.adam) {
    schedule_.validate();
    if (source_data.empty() || target_data.empty()) throw ContractError("adaptation needs non-empty datasets");
    source_features_ = inference::encode_dataset(source.encoder, source_data);
    source_embeddings_ = inference::decode_features(source.decoder, source_features_);
    source_fingerprint_ = fingerprint_source();
  }

  AdaptEpochStats run_epoch() {
    AdaptEpochStats st;
    st.epoch = epoch_;
    double d_sum = 0, g_sum = 0, c_sum = 0, d_hits = 0;
    std::size_t d_n = 0, g_n = 0, c_n = 0, d_seen = 0;
    const std::uint64_t seed = schedule_.seed;

    if (schedule_.center() || schedule_.phases != PhaseSchedule::sequential) centers_ = current_centers();

    if (schedule_.adversarial()) {
      BatchStream src(source_data_.size(), schedule_.batch_size, derive_seed(seed, "adapt-source"), epoch_);
      BatchStream tgt(target_data_.size(), schedule_.batch_size, derive_seed(seed, "adapt-target"), epoch_);
      const std::size_t pairs = std::max(src.batches_per_pass(), tgt.batches_per_pass());
      for (std::size_t b = 0; b < pairs; ++b) {
        const auto& si = src.next();
        const data::Batch tb = data::make_batch(target_data_, tgt.next());

        numerics::Graph g;
        const auto feats = models::encode(g, target_.encoder, g.input("images", tb.images));

        // discriminator step on fixed features
        {
          numerics::Graph gd;
          const auto s_logit = models::discriminator_logits(gd, disc_, gd.input("source", gather(source_features_, si)));
          const auto t_logit = models::discriminator_logits(gd, disc_, gd.input("target", g.value(feats)));
          const auto loss = losses::discriminator_loss(gd, s_logit, t_logit);
          for (float v : gd.value(s_logit).data()) {
            st.saturated += saturated(v);
            d_hits += v > 0.0f;
          }
          for (float v : gd.value(t_logit).data()) {
            st.saturated += saturated(v);
            d_hits += v <= 0.0f;
          }
          d_seen += si.size() + tb.size();
          disc_opt_.zero_grad();
          gd.backward(loss.node);
          disc_opt_.step();
          d_sum += loss.value;
          d_n += si.size() + tb.size();
          ++st.discriminator_steps;
        }

        // encoder step against the updated, now fixed, discriminator
        const auto& frozen_disc = std::as_const(disc_);
        const auto gen = losses::generator_loss(g, models::discriminator_logits(g, frozen_disc, feats));
        g_sum += gen.value;
        g_n += tb.size();
        if (schedule_.phases == PhaseSchedule::summed && schedule_.center()) {
          const auto emb = models::decode(g, target_.decoder, feats);
          const auto cm = losses::center_magnet_loss(g, emb, g.constant(centers_.centers));
          c_sum += cm.value;
          c_n += tb.size();
          model_opt_.zero_grad();
          g.backward(g.add(gen.node, cm.node));
          model_opt_.step();
          ++st.generator_steps;
          ++st.center_steps;
        } else {
          encoder_opt_.zero_grad();
          g.backward(gen.node);
          encoder_opt_.step();
          ++st.generator_steps;
          if (schedule_.phases == PhaseSchedule::interleaved && schedule_.center()) {
            c_sum += center_step(tb.images);
            c_n += tb.size();
            ++st.center_steps;
          }
        }
      }
    }

    if (schedule_.center() && (schedule_.phases == PhaseSchedule::sequential || !schedule_.adversarial())) {
      for (const auto& idx : data::batch_indices(target_data_.size(), schedule_.batch_size,
                                                 derive_seed(seed, "adapt-center"), epoch_)) {
        const data::Batch tb = data::make_batch(target_data_, idx);
        c_sum += center_step(tb.images);
        c_n += tb.size();
        ++st.center_steps;
      }
    }

    if (fingerprint_source() != source_fingerprint_)
      throw ConsistencyError("source model parameters changed during adaptation");
    st.discriminator_loss = d_n ? d_sum / static_cast<double>(d_n) : 0.0;
    st.generator_loss = g_n ? g_sum / static_cast<double>(g_n) : 0.0;
    st.center_loss = c_n ? c_sum / static_cast<double>(c_n) : 0.0;
    st.discriminator_accuracy = d_seen ? d_hits / static_cast<double>(d_seen) : 0.0;
    ++epoch_;
    return st;
  }

  // Per-class means of the frozen source embeddings.
  ClusterCenters current_centers() const { return compute_cluster_centers(source_embeddings_, source_data_.labels); }

  const Tensor& source_features() const noexcept { return source_features_; }
  const Tensor& source_embeddings() const noexcept { return source_embeddings_; }
  std::size_t epoch() const noexcept { return epoch_; }
  void set_epoch(std::size_t e) noexcept { epoch_ = e; }
  const AdaptSchedule& schedule() const noexcept { return schedule_; }

  numerics::Adam& discriminator_optimizer() noexcept { return disc_opt_; }
  numerics::Adam& encoder_optimizer() noexcept { return encoder_opt_; }
  numerics::Adam& model_optimizer() noexcept { return model_opt_; }

 private:
  static bool saturated(float logit) {
    const float p = numerics::sigmoid(logit);
    return p == 0.0f || p == 1.0f;
  }

  static Tensor gather(const Tensor& rows, const std::vector<std::size_t>& idx) {
    Tensor out(Shape{idx.size(), rows.dim(1)});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto src = rows.row(idx[r]);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
  }

  std::uint64_t fingerprint_source() const {
    auto copy = const_cast<ModelBundle&>(source_).parameters();
    return parameter_fingerprint(copy);
  }

  double center_step(const Tensor& images) {
    numerics::Graph g;
    const auto emb = models::decode(g, target_.decoder, models::encode(g, target_.encoder, g.input("images", images)));
    const auto loss = losses::center_magnet_loss(g, emb, g.constant(centers_.centers));
    model_opt_.zero_grad();
    g.backward(loss.node);
    model_opt_.step();
    return loss.value;
  }

  const ModelBundle& source_;
  ModelBundle& target_;
  Discriminator& disc_;
  const data::LabeledDataset& source_data_;
  const data::LabeledDataset& target_data_;
  AdaptSchedule schedule_;
  numerics::Adam disc_opt_;
  numerics::Adam encoder_opt_;
  numerics::Adam model_opt_;
  Tensor source_features_;
  Tensor source_embeddings_;
  ClusterCenters centers_;
  std::uint64_t source_fingerprint_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace madda::training
