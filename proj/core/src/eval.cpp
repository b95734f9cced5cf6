#include "artuda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "artuda/errors.hpp"
#include "artuda/svg.hpp"

namespace artuda::evalkit {

using autodiff::Tape;
using autodiff::Var;
using nlohmann::json;

void MetricsRecord::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(clean_acc)) throw DataError("metrics: clean_acc out of [0,1]");
  for (const auto& [name, acc] : robust_acc) {
    if (!in_unit(acc))
      throw DataError("metrics: robust_acc[" + name + "] out of [0,1]");
  }
  if (feature_distance < 0) throw DataError("metrics: negative feature distance");
  if (per_class_acc) {
    for (double a : *per_class_acc) {
      if (!std::isnan(a) && !in_unit(a))
        throw DataError("metrics: per-class accuracy out of [0,1]");
    }
  }
  if (wall_time_s < 0) throw DataError("metrics: negative wall time");
}

std::string to_jsonl(const MetricsRecord& rec) {
  rec.validate();
  json j;
  j["experiment_id"] = rec.experiment_id;
  j["method"] = rec.method;
  j["seed"] = rec.seed;
  j["clean_acc"] = rec.clean_acc;
  j["robust_acc"] = rec.robust_acc;
  j["feature_distance"] = rec.feature_distance;
  if (rec.per_class_acc) {
    json arr = json::array();
    for (double a : *rec.per_class_acc) {
      if (std::isnan(a))
        arr.push_back(nullptr);
      else
        arr.push_back(a);
    }
    j["per_class_acc"] = arr;
  }
  if (rec.pseudo_label_acc) j["pseudo_label_acc"] = *rec.pseudo_label_acc;
  j["lambda"] = rec.lambda_weight;
  j["wall_time_s"] = rec.wall_time_s;
  return j.dump();
}

MetricsRecord metrics_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("metrics: unparseable JSONL line: " + std::string(e.what()));
  }
  MetricsRecord rec;
  try {
    rec.experiment_id = j.at("experiment_id").get<std::string>();
    rec.method = j.at("method").get<std::string>();
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.clean_acc = j.at("clean_acc").get<double>();
    rec.robust_acc = j.at("robust_acc").get<std::map<std::string, double>>();
    rec.feature_distance = j.at("feature_distance").get<double>();
    if (j.contains("per_class_acc")) {
      std::vector<double> pca;
      for (const auto& v : j["per_class_acc"]) {
        pca.push_back(v.is_null() ? std::nan("") : v.get<double>());
      }
      rec.per_class_acc = std::move(pca);
    }
    if (j.contains("pseudo_label_acc"))
      rec.pseudo_label_acc = j["pseudo_label_acc"].get<double>();
    rec.lambda_weight = j.value("lambda", 1.0);
    rec.wall_time_s = j.value("wall_time_s", 0.0);
  } catch (const json::exception& e) {
    throw DataError("metrics: bad record field: " + std::string(e.what()));
  }
  rec.validate();
  return rec;
}

std::vector<int> predict(const nn::UDAModel& model, const Tensor& x) {
  Tape tape;
  Var logits = nn::model_forward(tape, model, tape.constant(x),
                                 nn::Branch::class_logits);
  return nn::argmax_rows(tape.value(logits));
}

double accuracy_of(const std::vector<int>& pred,
                   const std::vector<int>& label) {
  if (pred.size() != label.size() || pred.empty()) {
    throw DataError("accuracy: prediction/label size mismatch");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == label[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median of nothing");
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mean(const std::vector<double>& values) {
  if (values.empty()) throw DataError("mean of nothing");
  double s = 0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

namespace {

Tensor attacked_inputs(const nn::UDAModel& model,
                       const data::DomainDataset& dataset,
                       const attacks::AttackConfig& attack, Rng* rng) {
  const std::vector<int>& labels = dataset.eval_labels();
  return attacks::generate(model, dataset.features, attack, &labels, nullptr,
                           rng);
}

}  // namespace

double eval_accuracy(const nn::UDAModel& model,
                     const data::DomainDataset& dataset,
                     const attacks::AttackConfig* attack, Rng* rng) {
  const std::vector<int>& labels = dataset.eval_labels();
  Tensor inputs = attack ? attacked_inputs(model, dataset, *attack, rng)
                         : dataset.features;
  return accuracy_of(predict(model, inputs), labels);
}

double feature_distance(const nn::UDAModel& model,
                        const data::DomainDataset& dataset,
                        const attacks::AttackConfig& attack, Rng* rng) {
  Tensor adv = attacked_inputs(model, dataset, attack, rng);
  Tape tape;
  Tensor f_clean = tape.value(nn::model_forward(
      tape, model, tape.constant(dataset.features), nn::Branch::features));
  Tensor f_adv = tape.value(nn::model_forward(tape, model, tape.constant(adv),
                                              nn::Branch::features));
  std::size_t n = f_clean.rows(), d = f_clean.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double delta = f_clean.at(i, j) - f_adv.at(i, j);
      sq += delta * delta;
    }
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(n);
}

std::vector<double> classwise_accuracy(const nn::UDAModel& model,
                                       const data::DomainDataset& dataset,
                                       const attacks::AttackConfig* attack,
                                       Rng* rng) {
  const std::vector<int>& labels = dataset.eval_labels();
  Tensor inputs = attack ? attacked_inputs(model, dataset, *attack, rng)
                         : dataset.features;
  std::vector<int> pred = predict(model, inputs);
  std::size_t k = dataset.num_classes;
  std::vector<double> hits(k, 0.0), counts(k, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    counts[labels[i]] += 1.0;
    hits[labels[i]] += pred[i] == labels[i];
  }
  std::vector<double> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    out[c] = counts[c] > 0 ? hits[c] / counts[c] : std::nan("");
  }
  return out;
}

SweepResult budget_sweep(const nn::UDAModel& model,
                         const data::DomainDataset& dataset,
                         const attacks::AttackConfig& base,
                         const std::vector<double>& eps_list,
                         const std::vector<int>& jmax_list,
                         const std::filesystem::path& out_dir,
                         std::uint64_t seed) {
  if (eps_list.empty() || jmax_list.empty()) {
    throw ConfigError("budget_sweep: empty grid");
  }
  if (!std::is_sorted(eps_list.begin(), eps_list.end()) ||
      !std::is_sorted(jmax_list.begin(), jmax_list.end())) {
    throw ConfigError("budget_sweep: grids must be sorted ascending");
  }

  SweepResult result;
  result.eps_list = eps_list;
  result.jmax_list = jmax_list;
  for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
    std::vector<double> row;
    for (std::size_t ji = 0; ji < jmax_list.size(); ++ji) {
      attacks::AttackConfig cfg = base;
      cfg.epsilon = eps_list[ei];
      cfg.j_max = jmax_list[ji];
      cfg.alpha.reset();  // re-derive the step from the grid point
      Rng rng(derive_seed(seed, "sweep", ei * jmax_list.size() + ji));
      row.push_back(eval_accuracy(model, dataset, &cfg, &rng));
    }
    result.accuracy.push_back(std::move(row));
  }
  write_sweep_outputs(result, out_dir);
  return result;
}

void write_sweep_outputs(const SweepResult& result,
                         const std::filesystem::path& out_dir) {
  const auto& eps_list = result.eps_list;
  const auto& jmax_list = result.jmax_list;
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "budget_sweep.csv", std::ios::trunc);
  csv << "eps";
  for (int j : jmax_list) csv << ",jmax_" << j;
  csv << '\n';
  char buf[48];
  for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
    std::snprintf(buf, sizeof(buf), "%.17g", eps_list[ei]);
    csv << buf;
    for (double acc : result.accuracy[ei]) {
      std::snprintf(buf, sizeof(buf), "%.17g", acc);
      csv << ',' << buf;
    }
    csv << '\n';
  }

  std::vector<svg::Series> by_jmax;
  for (std::size_t ji = 0; ji < jmax_list.size(); ++ji) {
    svg::Series s;
    s.label = "j_max=" + std::to_string(jmax_list[ji]);
    for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
      s.x.push_back(eps_list[ei]);
      s.y.push_back(result.accuracy[ei][ji]);
    }
    by_jmax.push_back(std::move(s));
  }
  svg::write_line_plot(out_dir / "accuracy_vs_eps.svg", "Robust accuracy",
                       "epsilon", "accuracy", by_jmax);

  std::vector<svg::Series> by_eps;
  for (std::size_t ei = 0; ei < eps_list.size(); ++ei) {
    svg::Series s;
    std::snprintf(buf, sizeof(buf), "eps=%g", eps_list[ei]);
    s.label = buf;
    for (std::size_t ji = 0; ji < jmax_list.size(); ++ji) {
      s.x.push_back(jmax_list[ji]);
      s.y.push_back(result.accuracy[ei][ji]);
    }
    by_eps.push_back(std::move(s));
  }
  svg::write_line_plot(out_dir / "accuracy_vs_jmax.svg", "Robust accuracy",
                       "j_max", "accuracy", by_eps);
}

bool SanityReport::all_pass() const {
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

namespace {

double chance_level(const std::vector<int>& labels) {
  std::set<int> classes(labels.begin(), labels.end());
  return 1.0 / static_cast<double>(classes.size());
}

std::string fmt_pct(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

SanityReport sanity_suite(const nn::UDAModel& natural_model,
                          const nn::UDAModel& defended_model,
                          const nn::UDAModel& substitute_model,
                          const data::DomainDataset& dataset, double epsilon,
                          int j_max, const std::vector<double>& eps_grid,
                          std::uint64_t seed) {
  SanityReport report;
  const std::vector<int>& labels = dataset.eval_labels();

  // Deterministic no-random-start PGD: at toy dimension a random start can
  // only displace the sign trajectory, so this is the stronger variant and
  // the right one to compare against FGSM and the transfer attack.
  auto pgd = attacks::AttackConfig::pgd_config(epsilon, j_max,
                                               /*random_start=*/false);
  auto fgsm = attacks::AttackConfig::fgsm_config(epsilon);

  // (a) iterative attacks are at least as strong as one-step attacks
  {
    bool pass = true;
    std::string detail;
    int idx = 0;
    for (const auto* m : {&natural_model, &defended_model}) {
      double pgd_acc = eval_accuracy(*m, dataset, &pgd, nullptr);
      double fgsm_acc = eval_accuracy(*m, dataset, &fgsm, nullptr);
      pass = pass && pgd_acc <= fgsm_acc;
      detail += (idx ? "; defended" : "natural");
      detail += " pgd=" + fmt_pct(pgd_acc) + " fgsm=" + fmt_pct(fgsm_acc);
      ++idx;
    }
    report.checks.push_back({"pgd_not_weaker_than_fgsm", pass, detail});
  }

  // (b) white-box at least as strong as black-box, identical budgets
  {
    attacks::AttackConfig transfer =
        attacks::AttackConfig::mifgsm_config(epsilon, j_max);
    bool pass = true;
    std::string detail;
    int idx = 0;
    for (const auto* m : {&natural_model, &defended_model}) {
      double white = eval_accuracy(*m, dataset, &pgd, nullptr);
      auto res = attacks::transfer_attack(substitute_model, *m,
                                          dataset.features, labels, transfer,
                                          nullptr);
      double black = accuracy_of(res.target_predictions, labels);
      pass = pass && white <= black;
      detail += (idx ? "; defended" : "natural");
      detail += " white=" + fmt_pct(white) + " black=" + fmt_pct(black);
      ++idx;
    }
    report.checks.push_back({"whitebox_not_weaker_than_blackbox", pass, detail});
  }

  // (c) unbounded attack reaches ~full success on the natural model
  {
    double lo = dataset.features[0], hi = dataset.features[0];
    for (double v : dataset.features.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    auto unbounded = attacks::AttackConfig::pgd_config(hi - lo, 100,
                                                       /*random_start=*/false);
    double acc = eval_accuracy(natural_model, dataset, &unbounded, nullptr);
    double chance = chance_level(labels);
    bool pass = acc <= chance + 0.02;
    report.checks.push_back({"unbounded_attack_reaches_chance", pass,
                             "acc=" + fmt_pct(acc) + " chance=" + fmt_pct(chance)});
  }
  (void)seed;

  // (d) accuracy non-increasing in the perturbation budget
  {
    bool pass = true;
    std::string detail;
    double prev = 2.0;
    for (std::size_t i = 0; i < eps_grid.size(); ++i) {
      double acc;
      if (eps_grid[i] == 0.0) {
        acc = eval_accuracy(natural_model, dataset);
      } else {
        auto cfg = attacks::AttackConfig::pgd_config(eps_grid[i], j_max,
                                                     /*random_start=*/false);
        acc = eval_accuracy(natural_model, dataset, &cfg, nullptr);
      }
      if (i) detail += " ";
      detail += fmt_pct(acc);
      pass = pass && acc <= prev;
      prev = acc;
    }
    report.checks.push_back({"accuracy_monotone_in_eps", pass, detail});
  }
  return report;
}

}  // namespace artuda::evalkit
