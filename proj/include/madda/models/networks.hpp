#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>

#include "madda/numerics/graph.hpp"
#include "madda/numerics/random.hpp"
#include "madda/numerics/tensor.hpp"

namespace madda::models {

using numerics::BasicGraph;
using numerics::NodeId;

inline constexpr std::size_t kFeatureDim = 500;
inline constexpr std::size_t kEmbeddingDim = 256;
inline constexpr std::size_t kDiscriminatorHidden = 500;

enum class Role { source, target };

inline std::string to_string(Role r) { return r == Role::source ? "source" : "target"; }

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. Each tensor
// draws from its own stream keyed by name, so adding a layer does not
// reshuffle the others.
template <typename T>
BasicParameter<T> init_weight(const std::string& name, Shape shape, std::size_t fan_in, std::uint64_t seed) {
  Rng rng(derive_seed(seed, name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  BasicTensor<T> w(std::move(shape));
  for (auto& v : w.data()) v = static_cast<T>(uniform_real(rng, -bound, bound));
  return BasicParameter<T>(name, std::move(w));
}

template <typename T>
BasicParameter<T> init_bias(const std::string& name, std::size_t n) {
  return BasicParameter<T>(name, BasicTensor<T>(Shape{n}));
}

// Node for a parameter: trainable when the owner is mutable, a constant
// snapshot when it is const.
template <typename T, typename P>
NodeId bind(BasicGraph<T>& g, P& p) {
  if constexpr (std::is_const_v<P>) {
    return g.frozen(p);
  } else {
    return g.param(p);
  }
}

// Caffe LeNet feature extractor:
// conv 5x5 (1->20) -> pool -> conv 5x5 (20->50) -> pool -> fc 800->500 -> ReLU.
template <typename T>
struct BasicEncoder {
  BasicParameter<T> conv1_weight, conv1_bias, conv2_weight, conv2_bias, fc_weight, fc_bias;

  ParameterRefs<T> parameters() {
    return {&conv1_weight, &conv1_bias, &conv2_weight, &conv2_bias, &fc_weight, &fc_bias};
  }
};

// Linear map from encoder features to the embedding space.
template <typename T>
struct BasicDecoder {
  BasicParameter<T> weight, bias;

  ParameterRefs<T> parameters() { return {&weight, &bias}; }
};

// Three fully connected layers on encoder features; outputs one logit.
template <typename T>
struct BasicDiscriminator {
  BasicParameter<T> fc1_weight, fc1_bias, fc2_weight, fc2_bias, fc3_weight, fc3_bias;

  ParameterRefs<T> parameters() {
    return {&fc1_weight, &fc1_bias, &fc2_weight, &fc2_bias, &fc3_weight, &fc3_bias};
  }
};

// The embedding function f = decoder . encoder.
template <typename T>
struct BasicModelBundle {
  BasicEncoder<T> encoder;
  BasicDecoder<T> decoder;
  Role role = Role::source;

  ParameterRefs<T> parameters() {
    auto p = encoder.parameters();
    for (auto* d : decoder.parameters()) p.push_back(d);
    return p;
  }
  ParameterRefs<T> encoder_parameters() { return encoder.parameters(); }
};

template <typename T = float>
BasicEncoder<T> build_encoder(std::uint64_t seed) {
  BasicEncoder<T> e;
  e.conv1_weight = init_weight<T>("encoder.conv1.weight", Shape{20, 1, 5, 5}, 1 * 5 * 5, seed);
  e.conv1_bias = init_bias<T>("encoder.conv1.bias", 20);
  e.conv2_weight = init_weight<T>("encoder.conv2.weight", Shape{50, 20, 5, 5}, 20 * 5 * 5, seed);
  e.conv2_bias = init_bias<T>("encoder.conv2.bias", 50);
  e.fc_weight = init_weight<T>("encoder.fc.weight", Shape{kFeatureDim, 800}, 800, seed);
  e.fc_bias = init_bias<T>("encoder.fc.bias", kFeatureDim);
  return e;
}

template <typename T = float>
BasicDecoder<T> build_decoder(std::uint64_t seed) {
  BasicDecoder<T> d;
  d.weight = init_weight<T>("decoder.weight", Shape{kEmbeddingDim, kFeatureDim}, kFeatureDim, seed);
  d.bias = init_bias<T>("decoder.bias", kEmbeddingDim);
  return d;
}

template <typename T = float>
BasicDiscriminator<T> build_discriminator(std::uint64_t seed) {
  BasicDiscriminator<T> d;
  const std::size_t h = kDiscriminatorHidden;
  d.fc1_weight = init_weight<T>("discriminator.fc1.weight", Shape{h, kFeatureDim}, kFeatureDim, seed);
  d.fc1_bias = init_bias<T>("discriminator.fc1.bias", h);
  d.fc2_weight = init_weight<T>("discriminator.fc2.weight", Shape{h, h}, h, seed);
  d.fc2_bias = init_bias<T>("discriminator.fc2.bias", h);
  d.fc3_weight = init_weight<T>("discriminator.fc3.weight", Shape{1, h}, h, seed);
  d.fc3_bias = init_bias<T>("discriminator.fc3.bias", 1);
  return d;
}

template <typename T = float>
BasicModelBundle<T> build_model(std::uint64_t seed, Role role = Role::source) {
  return BasicModelBundle<T>{build_encoder<T>(seed), build_decoder<T>(seed), role};
}

// Same architecture, deep copy of the source parameters.
template <typename T>
BasicModelBundle<T> init_target_from_source(const BasicModelBundle<T>& source) {
  BasicModelBundle<T> target = source;
  target.role = Role::target;
  return target;
}

// images: (B, 1, 28, 28) -> features (B, 500)
template <typename T, typename Enc>
NodeId encode(BasicGraph<T>& g, Enc& e, NodeId images) {
  NodeId x = g.conv2d(images, bind(g, e.conv1_weight), bind(g, e.conv1_bias));
  x = g.max_pool2x2(x);
  x = g.conv2d(x, bind(g, e.conv2_weight), bind(g, e.conv2_bias));
  x = g.max_pool2x2(x);
  x = g.flatten(x);
  x = g.affine(x, bind(g, e.fc_weight), bind(g, e.fc_bias));
  return g.relu(x);
}

// features (B, 500) -> embeddings (B, 256)
template <typename T, typename Dec>
NodeId decode(BasicGraph<T>& g, Dec& d, NodeId features) {
  return g.affine(features, bind(g, d.weight), bind(g, d.bias));
}

// features (B, 500) -> logits (B, 1); sigmoid(logit) is P(feature came from the source encoder).
template <typename T, typename Disc>
NodeId discriminator_logits(BasicGraph<T>& g, Disc& d, NodeId features) {
  NodeId h = g.relu(g.affine(features, bind(g, d.fc1_weight), bind(g, d.fc1_bias)));
  h = g.relu(g.affine(h, bind(g, d.fc2_weight), bind(g, d.fc2_bias)));
  return g.affine(h, bind(g, d.fc3_weight), bind(g, d.fc3_bias));
}

template <typename T, typename Disc>
NodeId discriminator_probabilities(BasicGraph<T>& g, Disc& d, NodeId features) {
  return g.sigmoid(discriminator_logits(g, d, features));
}

using Encoder = BasicEncoder<float>;
using Decoder = BasicDecoder<float>;
using Discriminator = BasicDiscriminator<float>;
using ModelBundle = BasicModelBundle<float>;

}  // namespace madda::models
