#pragma once

#include <filesystem>
#include <string>

#include "madda/data/dataset.hpp"
#include "madda/data/idx.hpp"
#include "madda/data/synthetic.hpp"
#include "madda/data/usps.hpp"
#include "madda/errors.hpp"
#include "madda/experiment/config.hpp"

namespace madda::experiment {

// Domains: `mnist` (IDX files), `usps` (CSV), and the generated
// `synthetic-thin` / `synthetic-bold` pair.
//   <data_root>/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte
//   <data_root>/usps/usps_{train,test}.csv
// `mnist.dir` / `usps.dir` point at the directories directly.
inline std::filesystem::path domain_dir(const ExperimentConfig& cfg, const std::string& domain) {
  const std::string key = domain + ".dir";
  if (cfg.values().count(key) && !cfg.get(key).empty()) return cfg.get(key);
  const auto root = cfg.data_root();
  if (root.empty())
    throw UsageError("no data location for '" + domain + "': set data_root, " + key + " or " + kDataRootEnv);
  return root / domain;
}

inline std::filesystem::path require_file(std::filesystem::path p) {
  if (!std::filesystem::is_regular_file(p)) throw UsageError("dataset file not found: " + p.string());
  return p;
}

inline data::LabeledDataset load_domain(const ExperimentConfig& cfg, const std::string& domain, data::Split split) {
  if (domain == "mnist") {
    const auto dir = domain_dir(cfg, domain);
    const std::string stem = split == data::Split::train ? "train" : "t10k";
    return data::load_idx(require_file(dir / (stem + "-images-idx3-ubyte")),
                          require_file(dir / (stem + "-labels-idx1-ubyte")), domain, split);
  }
  if (domain == "usps") {
    const auto dir = domain_dir(cfg, domain);
    return data::load_usps(require_file(dir / ("usps_" + data::to_string(split) + ".csv")), split, domain);
  }
  if (domain == "synthetic-thin" || domain == "synthetic-bold") {
    const std::size_t n = cfg.get_size(split == data::Split::train ? "synthetic.train_size" : "synthetic.test_size");
    // fixed generator seed: the data stays put when the run seed changes
    return data::make_synthetic_digits(n, data::synthetic_style(domain.substr(10)), hash_tag(domain), domain, split);
  }
  throw UsageError("unknown domain '" + domain + "' (expected mnist, usps, synthetic-thin or synthetic-bold)");
}

// Training split, subsampled per `subsample.<domain>`.
inline data::LabeledDataset training_set(const ExperimentConfig& cfg, const std::string& domain) {
  data::LabeledDataset full = load_domain(cfg, domain, data::Split::train);
  const auto n = cfg.subsample(domain);
  if (!n) return full;
  if (*n > full.size())
    throw UsageError("subsample." + domain + " = " + std::to_string(*n) + " exceeds the " +
                     std::to_string(full.size()) + " available examples");
  return data::subsample(full, *n, derive_seed(cfg.seed(), "subsample", hash_tag(domain)));
}

inline data::LabeledDataset test_set(const ExperimentConfig& cfg, const std::string& domain) {
  return load_domain(cfg, domain, data::Split::test);
}

}  // namespace madda::experiment
