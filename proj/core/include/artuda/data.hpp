#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "artuda/tensor.hpp"

namespace artuda::data {

enum class DomainTag { source, target };

// A labeled or unlabeled dataset from one domain. Target labels, when
// physically present, are reachable only through eval_labels(); the batch
// iterator never attaches them, which is what keeps training label-free.
struct DomainDataset {
  Tensor features;  // [n, d]
  std::optional<std::vector<int>> labels;
  DomainTag tag = DomainTag::source;
  std::string provenance;
  std::size_t num_classes = 0;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }

  /// Evaluation-side label access; throws if the dataset is unlabeled.
  const std::vector<int>& eval_labels() const;
};

/// Source = standard two moons (K=2, balanced); target = an independent draw
/// rotated about the origin by rotation_deg and translated. Target labels
/// are retained for evaluation only. n must be even.
std::pair<DomainDataset, DomainDataset> gen_two_moons_shift(
    std::size_t n, double noise_sd, double rotation_deg,
    std::array<double, 2> translation, std::uint64_t seed);

/// K 2-D Gaussian blobs with centers uniform in [-center_scale, center_scale]^2;
/// target centers are shifted by shift and target noise scaled by
/// sqrt(covariance_scale).
std::pair<DomainDataset, DomainDataset> gen_blobs_shift(
    std::size_t num_classes, std::size_t n, double center_scale,
    std::array<double, 2> shift, double covariance_scale, std::uint64_t seed);

struct CsvSchema {
  std::vector<std::string> feature_columns;
  std::optional<std::string> label_column;
  DomainTag tag = DomainTag::source;
  std::optional<std::size_t> num_classes;  // default: max label + 1
};

/// Loads a UTF-8, comma-separated file with a header row. Malformed rows are
/// reported with their line number.
DomainDataset load_csv(const std::filesystem::path& path,
                       const CsvSchema& schema);

/// Writes header + rows; the label column (named "label") only if present.
void save_csv(const DomainDataset& dataset,
              const std::filesystem::path& path);

/// One training batch. Target batches carry features only.
struct Batch {
  Tensor x;
  std::vector<int> labels;  // empty for target datasets
};

/// Shuffled batches for one epoch, driven by a generator seeded with
/// (seed, epoch); the last partial batch is dropped. Order is reproducible.
std::vector<Batch> make_batches(const DomainDataset& dataset,
                                std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch);

}  // namespace artuda::data
