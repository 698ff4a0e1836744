#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "madda/errors.hpp"

namespace madda::experiment {

using Record = nlohmann::ordered_json;

// Line-delimited JSON, one record per epoch, flushed as written.
class MetricsLog {
 public:
  MetricsLog() = default;

  // keep_through_epoch: drop records of later epochs (resume); -1 truncates.
  MetricsLog(const std::filesystem::path& path, long keep_through_epoch = -1) : path_(path) {
    std::vector<std::string> kept;
    if (keep_through_epoch >= 0) {
      for (const auto& r : read_metrics(path))
        if (r.value("epoch", -1L) <= keep_through_epoch) kept.push_back(r.dump());
    }
    out_.open(path, std::ios::trunc);
    if (!out_) throw IoError("cannot open metrics log " + path.string());
    for (const auto& line : kept) out_ << line << '\n';
    out_.flush();
  }

  void write(const Record& r) {
    out_ << r.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("error writing metrics log " + path_.string());
  }

  const std::filesystem::path& path() const noexcept { return path_; }

  static std::vector<Record> read_metrics(const std::filesystem::path& path) {
    std::vector<Record> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        out.push_back(Record::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": malformed metrics record: " + e.what());
      }
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace madda::experiment
