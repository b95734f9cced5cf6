#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "artuda/attacks.hpp"
#include "artuda/data.hpp"
#include "artuda/nn.hpp"
#include "artuda/objectives.hpp"

namespace artuda::evalkit {

struct DataConfig {
  std::string generator = "two_moons";  // two_moons | blobs | csv
  // two_moons
  std::size_t n = 2000;
  double noise_sd = 0.1;
  double rotation_deg = 35.0;
  std::array<double, 2> translation{0.0, 0.0};
  // blobs
  std::size_t num_classes = 3;
  double center_scale = 3.0;
  std::array<double, 2> shift{1.0, 1.0};
  double covariance_scale = 1.0;
  // csv
  std::filesystem::path source_csv;
  std::filesystem::path target_csv;
  data::CsvSchema source_schema;
  data::CsvSchema target_schema;

  std::pair<data::DomainDataset, data::DomainDataset> make(
      std::uint64_t seed) const;
};

/// One evaluation attack with a reporting name.
struct EvalAttack {
  std::string name;
  attacks::AttackConfig config;
};

struct BlackboxConfig {
  bool enabled = true;
  attacks::AttackConfig config;                  // attack run on the substitute
  std::vector<std::size_t> substitute_widths{16, 16};
};

struct EvalConfig {
  double epsilon = 0.1;
  std::vector<EvalAttack> attacks;  // defaulted in config.cpp when empty
  std::optional<BlackboxConfig> blackbox;
  bool feature_distance = true;
  bool classwise = false;
};

struct SweepConfig {
  std::vector<double> eps_list;
  std::vector<int> jmax_list;
  std::vector<double> lambda_list;
};

struct ExperimentConfig {
  std::string experiment_id = "experiment";
  std::filesystem::path output_dir = "out";
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  DataConfig data;
  nn::ModelSpec model;
  objectives::ObjectiveSpec objective;
  objectives::TrainConfig train;
  EvalConfig eval;
  SweepConfig sweep;
  std::string sanity_defended_variant = "artuda";

  void validate() const;
};

/// Parses and validates a JSON experiment config. Errors carry the byte
/// offset (parse errors) or the JSON path of the offending field. The
/// ARTUDA_OUTPUT_DIR environment variable overrides output_dir.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Same, from an in-memory JSON string (tests use this).
ExperimentConfig parse_config(const std::string& text);

}  // namespace artuda::evalkit
