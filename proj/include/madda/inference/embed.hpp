#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "madda/data/dataset.hpp"
#include "madda/models/networks.hpp"
#include "madda/numerics/graph.hpp"

namespace madda::inference {

using models::ModelBundle;
using models::Role;

inline constexpr std::size_t kEmbedBatch = 256;

// Rows of embeddings plus the labels they carry (-1 when unknown).
struct EmbeddingSet {
  Tensor embeddings{Shape{0, models::kEmbeddingDim}};
  std::vector<int> labels;
  Role role = Role::source;
  std::string domain;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const { return embeddings.rank() == 2 ? embeddings.dim(1) : 0; }

  void validate() const {
    if (embeddings.rank() != 2 || embeddings.dim(0) != labels.size())
      throw ContractError("embedding set '" + domain + "' has shape " + madda::to_string(embeddings.shape()) +
                          " for " + std::to_string(labels.size()) + " labels");
  }
};

namespace detail {

inline void check_images(const data::LabeledDataset& data) {
  if (data.images.shape() != Shape{data.size(), 1, data::kImageSide, data::kImageSide})
    throw ContractError("dataset '" + data.domain + "' images have shape " + madda::to_string(data.images.shape()) +
                        ", the model expects (N, 1, 28, 28)");
}

// Runs `fn(graph, images_node)` over consecutive slices and stacks the (b, D) results.
template <typename Fn>
Tensor map_batches(const data::LabeledDataset& data, std::size_t width, std::size_t batch, Fn&& fn) {
  check_images(data);
  Tensor out(Shape{data.size(), width});
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t b = std::min(batch, data.size() - start);
    Tensor images(Shape{b, 1, data::kImageSide, data::kImageSide});
    const auto src = data.images.data().subspan(start * data::kImagePixels, b * data::kImagePixels);
    std::copy(src.begin(), src.end(), images.data().begin());
    numerics::Graph g;
    const auto node = fn(g, g.input("images", std::move(images)));
    const auto& v = g.value(node);
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * width));
  }
  return out;
}

}  // namespace detail

// Encoder outputs E(x), shape (N, 500).
inline Tensor encode_dataset(const models::Encoder& encoder, const data::LabeledDataset& data,
                             std::size_t batch = kEmbedBatch) {
  return detail::map_batches(data, models::kFeatureDim, batch,
                             [&](numerics::Graph& g, numerics::NodeId x) { return models::encode(g, encoder, x); });
}

// f(x) = decoder(encoder(x)), shape (N, 256). Rows do not depend on batch size.
inline EmbeddingSet embed_dataset(const ModelBundle& model, const data::LabeledDataset& data,
                                  std::size_t batch = kEmbedBatch) {
  EmbeddingSet set;
  set.embeddings = detail::map_batches(data, models::kEmbeddingDim, batch, [&](numerics::Graph& g, numerics::NodeId x) {
    return models::decode(g, model.decoder, models::encode(g, model.encoder, x));
  });
  set.labels = data.labels;
  set.role = model.role;
  set.domain = data.domain;
  return set;
}

// Decoder applied to precomputed features.
inline Tensor decode_features(const models::Decoder& decoder, const Tensor& features) {
  numerics::Graph g;
  return g.value(models::decode(g, decoder, g.input("features", features)));
}

}  // namespace madda::inference
