#include "artuda/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "artuda/errors.hpp"
#include "artuda/rng.hpp"

namespace artuda::data {

const std::vector<int>& DomainDataset::eval_labels() const {
  if (!labels) {
    throw DataError("dataset '" + provenance +
                    "' has no labels for evaluation");
  }
  return *labels;
}

std::pair<DomainDataset, DomainDataset> gen_two_moons_shift(
    std::size_t n, double noise_sd, double rotation_deg,
    std::array<double, 2> translation, std::uint64_t seed) {
  if (n < 4 || n % 2 != 0) {
    throw ConfigError("two_moons: n must be even and >= 4");
  }
  if (noise_sd < 0) throw ConfigError("two_moons: noise_sd must be >= 0");

  std::size_t m = n / 2;
  auto draw = [&](Rng& rng) {
    std::vector<double> feats(n * 2);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < m; ++i) {
      double t = std::numbers::pi * static_cast<double>(i) /
                 static_cast<double>(m - 1);
      feats[2 * i] = std::cos(t) + noise_sd * rng.normal();
      feats[2 * i + 1] = std::sin(t) + noise_sd * rng.normal();
      labels[i] = 0;
    }
    for (std::size_t i = 0; i < m; ++i) {
      double t = std::numbers::pi * static_cast<double>(i) /
                 static_cast<double>(m - 1);
      std::size_t r = m + i;
      feats[2 * r] = 1.0 - std::cos(t) + noise_sd * rng.normal();
      feats[2 * r + 1] = 0.5 - std::sin(t) + noise_sd * rng.normal();
      labels[r] = 1;
    }
    return std::pair(std::move(feats), std::move(labels));
  };

  Rng src_rng(derive_seed(seed, "two_moons/source"));
  Rng tgt_rng(derive_seed(seed, "two_moons/target"));
  auto [src_feats, src_labels] = draw(src_rng);
  auto [tgt_feats, tgt_labels] = draw(tgt_rng);

  double theta = rotation_deg * std::numbers::pi / 180.0;
  double c = std::cos(theta), s = std::sin(theta);
  for (std::size_t i = 0; i < n; ++i) {
    double x = tgt_feats[2 * i], y = tgt_feats[2 * i + 1];
    tgt_feats[2 * i] = c * x - s * y + translation[0];
    tgt_feats[2 * i + 1] = s * x + c * y + translation[1];
  }

  char prov[160];
  std::snprintf(prov, sizeof(prov),
                "two_moons(n=%zu,noise=%g,rot=%g,trans=(%g,%g),seed=%llu)", n,
                noise_sd, rotation_deg, translation[0], translation[1],
                static_cast<unsigned long long>(seed));

  DomainDataset src{Tensor::matrix(n, 2, std::move(src_feats)),
                    std::move(src_labels), DomainTag::source,
                    std::string(prov) + "/source", 2};
  DomainDataset tgt{Tensor::matrix(n, 2, std::move(tgt_feats)),
                    std::move(tgt_labels), DomainTag::target,
                    std::string(prov) + "/target", 2};
  return {std::move(src), std::move(tgt)};
}

std::pair<DomainDataset, DomainDataset> gen_blobs_shift(
    std::size_t num_classes, std::size_t n, double center_scale,
    std::array<double, 2> shift, double covariance_scale, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("blobs: K must be >= 2");
  if (n < num_classes) throw ConfigError("blobs: n must be >= K");
  if (covariance_scale <= 0) {
    throw ConfigError("blobs: covariance_scale must be > 0");
  }

  Rng center_rng(derive_seed(seed, "blobs/centers"));
  std::vector<std::array<double, 2>> centers(num_classes);
  for (auto& ctr : centers) {
    ctr[0] = center_rng.uniform(-center_scale, center_scale);
    ctr[1] = center_rng.uniform(-center_scale, center_scale);
  }

  // Balanced counts; any remainder goes to the first classes.
  std::vector<std::size_t> counts(num_classes, n / num_classes);
  for (std::size_t k = 0; k < n % num_classes; ++k) counts[k] += 1;

  auto draw = [&](Rng& rng, bool shifted, double sd) {
    std::vector<double> feats;
    std::vector<int> labels;
    feats.reserve(n * 2);
    labels.reserve(n);
    for (std::size_t k = 0; k < num_classes; ++k) {
      double cx = centers[k][0] + (shifted ? shift[0] : 0.0);
      double cy = centers[k][1] + (shifted ? shift[1] : 0.0);
      for (std::size_t i = 0; i < counts[k]; ++i) {
        feats.push_back(cx + sd * rng.normal());
        feats.push_back(cy + sd * rng.normal());
        labels.push_back(static_cast<int>(k));
      }
    }
    return std::pair(std::move(feats), std::move(labels));
  };

  Rng src_rng(derive_seed(seed, "blobs/source"));
  Rng tgt_rng(derive_seed(seed, "blobs/target"));
  auto [src_feats, src_labels] = draw(src_rng, false, 1.0);
  auto [tgt_feats, tgt_labels] =
      draw(tgt_rng, true, std::sqrt(covariance_scale));

  char prov[160];
  std::snprintf(prov, sizeof(prov),
                "blobs(K=%zu,n=%zu,scale=%g,shift=(%g,%g),cov=%g,seed=%llu)",
                num_classes, n, center_scale, shift[0], shift[1],
                covariance_scale, static_cast<unsigned long long>(seed));

  DomainDataset src{Tensor::matrix(n, 2, std::move(src_feats)),
                    std::move(src_labels), DomainTag::source,
                    std::string(prov) + "/source", num_classes};
  DomainDataset tgt{Tensor::matrix(n, 2, std::move(tgt_feats)),
                    std::move(tgt_labels), DomainTag::target,
                    std::string(prov) + "/target", num_classes};
  return {std::move(src), std::move(tgt)};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

DomainDataset load_csv(const std::filesystem::path& path,
                       const CsvSchema& schema) {
  if (schema.feature_columns.empty()) {
    throw ConfigError("csv schema: no feature columns declared");
  }
  std::ifstream f(path);
  if (!f) throw DataError("csv: cannot open " + path.string());

  std::string line;
  if (!std::getline(f, line)) throw DataError("csv: empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_csv_line(line);

  auto column_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw DataError("csv: schema column '" + name + "' not found in header of " +
                    path.string());
  };

  std::vector<std::size_t> feat_idx;
  for (const auto& name : schema.feature_columns)
    feat_idx.push_back(column_index(name));
  std::optional<std::size_t> label_idx;
  if (schema.label_column) label_idx = column_index(*schema.label_column);

  std::vector<double> feats;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("csv: line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(header.size()));
    }
    auto parse_double = [&](const std::string& cell) {
      try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
      } catch (const std::exception&) {
        throw DataError("csv: line " + std::to_string(line_no) +
                        ": cannot parse '" + cell + "' as a number");
      }
    };
    for (std::size_t idx : feat_idx) feats.push_back(parse_double(cells[idx]));
    if (label_idx) {
      double v = parse_double(cells[*label_idx]);
      int y = static_cast<int>(v);
      if (static_cast<double>(y) != v || y < 0) {
        throw DataError("csv: line " + std::to_string(line_no) +
                        ": label must be a non-negative integer");
      }
      labels.push_back(y);
    }
  }
  std::size_t d = feat_idx.size();
  if (feats.empty()) throw DataError("csv: no data rows in " + path.string());
  std::size_t n = feats.size() / d;

  std::size_t k = 0;
  if (label_idx) {
    for (int y : labels) k = std::max<std::size_t>(k, static_cast<std::size_t>(y) + 1);
    if (schema.num_classes) {
      for (int y : labels) {
        if (static_cast<std::size_t>(y) >= *schema.num_classes) {
          throw DataError("csv: label " + std::to_string(y) +
                          " out of declared range [0," +
                          std::to_string(*schema.num_classes) + ")");
        }
      }
      k = *schema.num_classes;
    }
  }

  DomainDataset ds;
  ds.features = Tensor::matrix(n, d, std::move(feats));
  if (label_idx) ds.labels = std::move(labels);
  ds.tag = schema.tag;
  ds.provenance = path.string();
  ds.num_classes = k;
  return ds;
}

void save_csv(const DomainDataset& dataset, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("csv: cannot open " + path.string() + " for writing");
  std::size_t d = dataset.dim();
  for (std::size_t j = 0; j < d; ++j) {
    if (j) f << ',';
    f << 'x' << j;
  }
  if (dataset.labels) f << ",label";
  f << '\n';
  char buf[64];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j) f << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", dataset.features.at(i, j));
      f << buf;
    }
    if (dataset.labels) f << ',' << (*dataset.labels)[i];
    f << '\n';
  }
}

std::vector<Batch> make_batches(const DomainDataset& dataset,
                                std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch) {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  std::size_t n = dataset.size();
  if (batch_size > n) {
    throw ConfigError("batch_size " + std::to_string(batch_size) +
                      " exceeds dataset size " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "batch", epoch));
  rng.shuffle(order);

  bool with_labels = dataset.tag == DomainTag::source && dataset.labels;
  std::size_t d = dataset.dim();
  std::vector<Batch> batches;
  for (std::size_t start = 0; start + batch_size <= n; start += batch_size) {
    std::vector<double> feats(batch_size * d);
    std::vector<int> labels;
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::size_t row = order[start + i];
      for (std::size_t j = 0; j < d; ++j)
        feats[i * d + j] = dataset.features.at(row, j);
      if (with_labels) labels.push_back((*dataset.labels)[row]);
    }
    batches.push_back(
        Batch{Tensor::matrix(batch_size, d, std::move(feats)), std::move(labels)});
  }
  return batches;
}

}  // namespace artuda::data
