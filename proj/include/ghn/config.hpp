#pragma once

// Run configuration in a small INI dialect:
//
//   # comment
//   [network]
//   architecture = cv[1,5,5,16]-pool-cv[16,5,5,64]-pool-fc[1024]-fc[1024,10]
//   threshold.mode = soft
//   layer.4.activation = none     # per weighted layer, 1-based
//
// Unknown sections and keys are errors that carry the line number.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "ghn/network.hpp"
#include "ghn/train.hpp"

namespace ghn {

enum class DatasetKind { mnist, cifar10 };

const char* to_string(DatasetKind k);
DatasetKind parse_dataset_kind(const std::string& s);

struct DataConfig {
  DatasetKind dataset = DatasetKind::mnist;
  std::string dir;               // empty = take from --data-dir or GHN_DATA_DIR
  std::size_t train_limit = 0;   // 0 = whole split
  std::size_t test_limit = 0;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RunConfig {
  NetworkSpec network;
  TrainConfig train;
  DataConfig data;
  std::string out_dir = "out";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& msg)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  /// 1-based; 0 when the error is not tied to a line.
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Defaults: the MNIST GHN of the fast-learning experiment.
RunConfig default_run_config();

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Text that parse_config maps back to an equal RunConfig.
std::string render_config(const RunConfig& cfg);

/// Checks cross-field constraints and that the data directory exists.
void validate(const RunConfig& cfg);

/// The paired network for the batch-normalization comparison: a GHN spec
/// yields a conventional network with learned bias, batch normalization and
/// ReLU on the same geometry; a baseline spec yields the GHN.
NetworkSpec counterpart(const NetworkSpec& spec);

}  // namespace ghn
