#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "artuda/attacks.hpp"
#include "artuda/data.hpp"
#include "artuda/nn.hpp"

namespace artuda::evalkit {

/// One experiment's measured outcomes; serialized as one JSONL line.
struct MetricsRecord {
  std::string experiment_id;
  std::string method;
  std::uint64_t seed = 0;
  double clean_acc = 0.0;
  std::map<std::string, double> robust_acc;  // attack name -> accuracy
  double feature_distance = 0.0;
  std::optional<std::vector<double>> per_class_acc;  // NaN = class absent
  std::optional<double> pseudo_label_acc;
  double lambda_weight = 1.0;
  double wall_time_s = 0.0;

  void validate() const;
};

std::string to_jsonl(const MetricsRecord& rec);
MetricsRecord metrics_from_json(const std::string& line);

/// Fraction of argmax-correct predictions on clean inputs, or on attacked
/// inputs when an attack is given (evaluation labels drive label-supervised
/// attacks). The model is read in eval mode and never mutated.
double eval_accuracy(const nn::UDAModel& model,
                     const data::DomainDataset& dataset,
                     const attacks::AttackConfig* attack = nullptr,
                     Rng* rng = nullptr);

/// Mean L2 distance between clean and adversarial last-layer features.
double feature_distance(const nn::UDAModel& model,
                        const data::DomainDataset& dataset,
                        const attacks::AttackConfig& attack,
                        Rng* rng = nullptr);

/// Per-class accuracy; an entry is NaN when that class has no examples
/// (undefined, not zero). Mean over defined balanced classes equals overall
/// accuracy.
std::vector<double> classwise_accuracy(const nn::UDAModel& model,
                                       const data::DomainDataset& dataset,
                                       const attacks::AttackConfig* attack,
                                       Rng* rng = nullptr);

struct SweepResult {
  std::vector<double> eps_list;
  std::vector<int> jmax_list;
  std::vector<std::vector<double>> accuracy;  // [eps][jmax]
};

/// Robust accuracy over the full eps x j_max grid; persisted as CSV and two
/// SVG line plots (accuracy vs eps per j_max, accuracy vs j_max per eps).
SweepResult budget_sweep(const nn::UDAModel& model,
                         const data::DomainDataset& dataset,
                         const attacks::AttackConfig& base,
                         const std::vector<double>& eps_list,
                         const std::vector<int>& jmax_list,
                         const std::filesystem::path& out_dir,
                         std::uint64_t seed);

/// Writes budget_sweep.csv and the two SVG plots for an assembled grid.
void write_sweep_outputs(const SweepResult& result,
                         const std::filesystem::path& out_dir);

struct SanityCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SanityReport {
  std::vector<SanityCheck> checks;
  bool all_pass() const;
};

/// The four evaluation sanity checks: (a) PGD accuracy <= FGSM accuracy,
/// (b) white-box PGD <= black-box transfer at identical budgets, (c) an
/// unbounded attack drives the natural model to at most chance + 2 points,
/// (d) accuracy non-increasing along an eps grid. Chance is 1/K over the
/// classes present in the evaluation labels.
SanityReport sanity_suite(const nn::UDAModel& natural_model,
                          const nn::UDAModel& defended_model,
                          const nn::UDAModel& substitute_model,
                          const data::DomainDataset& dataset, double epsilon,
                          int j_max, const std::vector<double>& eps_grid,
                          std::uint64_t seed);

// small shared helpers
std::vector<int> predict(const nn::UDAModel& model, const Tensor& x);
double accuracy_of(const std::vector<int>& pred, const std::vector<int>& label);
double median(std::vector<double> values);
double mean(const std::vector<double>& values);

}  // namespace artuda::evalkit
