#include "artuda/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>

#include "artuda/checkpoint.hpp"
#include "artuda/errors.hpp"
#include "artuda/report.hpp"

namespace artuda::evalkit {

namespace {

std::string fmt17(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == '/' || c == ' ') c = '-';
  }
  return s;
}

nn::ModelSpec resolve_model_spec(const ExperimentConfig& cfg,
                                 const data::DomainDataset& source) {
  nn::ModelSpec spec = cfg.model;
  spec.input_dim = source.dim();
  spec.num_classes = source.num_classes;
  spec.grl_coefficient = cfg.train.grl_coefficient;
  spec.validate();
  return spec;
}

nn::UDAModel train_substitute(const ExperimentConfig& cfg,
                              const data::DomainDataset& source,
                              const data::DomainDataset& target,
                              const nn::ModelSpec& base_spec,
                              std::uint64_t seed) {
  nn::ModelSpec spec = base_spec;
  spec.feature_widths = cfg.eval.blackbox->substitute_widths;
  objectives::ObjectiveSpec natural;
  natural.variant = objectives::Variant::natural;
  objectives::TrainConfig tcfg = cfg.train;
  tcfg.seed = derive_seed(seed, "substitute");
  return objectives::train(source, target, natural, tcfg, spec).model;
}

struct SeedOutcome {
  MetricsRecord record;
  objectives::TrainResult train_result;
};

SeedOutcome run_one(const ExperimentConfig& cfg,
                    const objectives::ObjectiveSpec& ospec,
                    std::uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();

  auto [source, target] = cfg.data.make(derive_seed(seed, "data"));
  nn::ModelSpec mspec = resolve_model_spec(cfg, source);

  objectives::TrainConfig tcfg = cfg.train;
  tcfg.seed = seed;
  objectives::TrainResult tr = objectives::train(source, target, ospec, tcfg, mspec);

  MetricsRecord rec;
  rec.experiment_id = cfg.experiment_id;
  rec.method = ospec.summary();
  rec.seed = seed;
  rec.lambda_weight = ospec.lambda_weight;
  rec.clean_acc = eval_accuracy(tr.model, target);

  for (const auto& atk : cfg.eval.attacks) {
    Rng rng(derive_seed(seed, "eval/" + atk.name));
    rec.robust_acc[atk.name] =
        eval_accuracy(tr.model, target, &atk.config, &rng);
  }
  if (cfg.eval.blackbox && cfg.eval.blackbox->enabled) {
    nn::UDAModel substitute = train_substitute(cfg, source, target, mspec, seed);
    auto res = attacks::transfer_attack(substitute, tr.model, target.features,
                                        target.eval_labels(),
                                        cfg.eval.blackbox->config, nullptr);
    rec.robust_acc["blackbox"] =
        accuracy_of(res.target_predictions, target.eval_labels());
  }
  if (cfg.eval.feature_distance) {
    // distance under the Table-style PGD attack when configured, else the
    // first attack in the list
    const EvalAttack* chosen = &cfg.eval.attacks.front();
    for (const auto& atk : cfg.eval.attacks) {
      if (atk.name == "pgd") chosen = &atk;
    }
    Rng rng(derive_seed(seed, "eval/feature_distance"));
    rec.feature_distance =
        feature_distance(tr.model, target, chosen->config, &rng);
  }
  if (cfg.eval.classwise) {
    const EvalAttack* chosen = &cfg.eval.attacks.front();
    for (const auto& atk : cfg.eval.attacks) {
      if (atk.name == "pgd") chosen = &atk;
    }
    Rng rng(derive_seed(seed, "eval/classwise"));
    rec.per_class_acc =
        classwise_accuracy(tr.model, target, &chosen->config, &rng);
  }
  if (ospec.variant == objectives::Variant::pseudo_label) {
    // The labeler is refit deterministically (same derived seed as in
    // train), so its accuracy can be reported without train() ever touching
    // target labels.
    objectives::PseudoLabeler labeler =
        objectives::fit_pseudo_labeler(source, target, ospec, tcfg, mspec);
    rec.pseudo_label_acc = accuracy_of(labeler.labels_for(target.features),
                                       target.eval_labels());
  }
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return SeedOutcome{std::move(rec), std::move(tr)};
}

void write_epochs_csv(const std::filesystem::path& path,
                      const objectives::TrainResult& tr) {
  std::ofstream f(path, std::ios::trunc);
  f << "epoch,mean_loss";
  if (!tr.epochs.empty()) {
    for (const auto& [name, unused] : tr.epochs.front().term_means)
      f << ',' << name;
  }
  f << '\n';
  for (const auto& rec : tr.epochs) {
    f << rec.epoch << ',' << fmt17(rec.mean_loss);
    for (const auto& [unused, v] : rec.term_means) f << ',' << fmt17(v);
    f << '\n';
  }
}

struct Aggregate {
  std::string method;
  double lambda = 1.0;
  std::vector<const MetricsRecord*> records;
};

std::vector<Aggregate> group_records(const std::vector<MetricsRecord>& records) {
  std::vector<Aggregate> groups;
  for (const auto& rec : records) {
    Aggregate* g = nullptr;
    for (auto& existing : groups) {
      if (existing.method == rec.method &&
          existing.lambda == rec.lambda_weight) {
        g = &existing;
      }
    }
    if (!g) {
      groups.push_back(Aggregate{rec.method, rec.lambda_weight, {}});
      g = &groups.back();
    }
    g->records.push_back(&rec);
  }
  return groups;
}

void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRecord>& records) {
  std::vector<std::string> attack_names;
  for (const auto& rec : records) {
    for (const auto& [name, unused] : rec.robust_acc) {
      if (std::find(attack_names.begin(), attack_names.end(), name) ==
          attack_names.end()) {
        attack_names.push_back(name);
      }
    }
  }
  std::ofstream f(path, std::ios::trunc);
  f << "method,lambda,seeds,clean_median,clean_mean";
  for (const auto& name : attack_names)
    f << ',' << name << "_median," << name << "_mean";
  f << ",feature_distance_median,feature_distance_mean\n";
  for (const auto& g : group_records(records)) {
    std::vector<double> clean, dist;
    for (const auto* r : g.records) {
      clean.push_back(r->clean_acc);
      dist.push_back(r->feature_distance);
    }
    f << g.method << ',' << fmt17(g.lambda) << ',' << g.records.size() << ','
      << fmt17(median(clean)) << ',' << fmt17(mean(clean));
    for (const auto& name : attack_names) {
      std::vector<double> accs;
      for (const auto* r : g.records) {
        auto it = r->robust_acc.find(name);
        if (it != r->robust_acc.end()) accs.push_back(it->second);
      }
      if (accs.empty()) {
        f << ",,";
      } else {
        f << ',' << fmt17(median(accs)) << ',' << fmt17(mean(accs));
      }
    }
    f << ',' << fmt17(median(dist)) << ',' << fmt17(mean(dist)) << '\n';
  }
}

void write_lambda_table(const std::filesystem::path& path,
                        const std::vector<MetricsRecord>& records) {
  std::vector<double> lambdas;
  for (const auto& rec : records) {
    if (std::find(lambdas.begin(), lambdas.end(), rec.lambda_weight) ==
        lambdas.end()) {
      lambdas.push_back(rec.lambda_weight);
    }
  }
  std::sort(lambdas.begin(), lambdas.end());
  std::vector<std::string> attack_names;
  for (const auto& [name, unused] : records.front().robust_acc)
    attack_names.push_back(name);

  std::ofstream f(path, std::ios::trunc);
  f << "lambda,clean_median";
  for (const auto& name : attack_names) f << ',' << name << "_median";
  f << '\n';
  for (double l : lambdas) {
    std::vector<double> clean;
    std::map<std::string, std::vector<double>> robust;
    for (const auto& rec : records) {
      if (rec.lambda_weight != l) continue;
      clean.push_back(rec.clean_acc);
      for (const auto& [name, acc] : rec.robust_acc) robust[name].push_back(acc);
    }
    f << fmt17(l) << ',' << fmt17(median(clean));
    for (const auto& name : attack_names) f << ',' << fmt17(median(robust[name]));
    f << '\n';
  }
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged at epoch " << e.epoch << ", step "
              << e.step << ": " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg) {
  return guarded([&] {
    std::filesystem::create_directories(cfg.output_dir);
    std::filesystem::create_directories(cfg.output_dir / "checkpoints");
    std::filesystem::create_directories(cfg.output_dir / "epochs");

    std::vector<double> lambdas = cfg.sweep.lambda_list;
    if (lambdas.empty()) lambdas = {cfg.objective.lambda_weight};

    std::vector<MetricsRecord> records;
    std::ofstream jsonl(cfg.output_dir / "metrics.jsonl", std::ios::trunc);
    for (double lambda : lambdas) {
      objectives::ObjectiveSpec ospec = cfg.objective;
      ospec.lambda_weight = lambda;
      for (std::uint64_t seed : cfg.seeds) {
        SeedOutcome outcome = run_one(cfg, ospec, seed);
        std::string stem = sanitize(cfg.experiment_id + "_" +
                                    ospec.summary() + "_lambda" +
                                    std::to_string(lambda) + "_seed" +
                                    std::to_string(seed));
        nn::save_checkpoint(outcome.train_result.model,
                            cfg.output_dir / "checkpoints" / (stem + ".ckpt"));
        write_epochs_csv(cfg.output_dir / "epochs" / (stem + ".csv"),
                         outcome.train_result);
        jsonl << to_jsonl(outcome.record) << '\n';
        records.push_back(std::move(outcome.record));
        std::cout << "run " << stem << ": clean=" << records.back().clean_acc;
        for (const auto& [name, acc] : records.back().robust_acc)
          std::cout << " " << name << "=" << acc;
        std::cout << "\n";
      }
    }
    jsonl.close();

    write_summary_csv(cfg.output_dir / "summary.csv", records);
    if (cfg.sweep.lambda_list.size() > 1) {
      write_lambda_table(cfg.output_dir / "lambda_table.csv", records);
    }
    return 0;
  });
}

int run_experiment(const std::filesystem::path& config_path) {
  try {
    return run_experiment(load_config(config_path));
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 1;
  }
}

int run_sweep(const ExperimentConfig& cfg) {
  return guarded([&] {
    if (cfg.sweep.eps_list.empty() || cfg.sweep.jmax_list.empty()) {
      throw ConfigError("sweep: eps_list and jmax_list must be non-empty");
    }
    std::filesystem::path sweep_dir = cfg.output_dir / "sweeps";
    std::filesystem::create_directories(sweep_dir);

    attacks::AttackConfig base =
        attacks::AttackConfig::pgd_config(cfg.eval.epsilon, 20);

    std::vector<SweepResult> per_seed;
    for (std::uint64_t seed : cfg.seeds) {
      auto [source, target] = cfg.data.make(derive_seed(seed, "data"));
      nn::ModelSpec mspec = resolve_model_spec(cfg, source);
      objectives::TrainConfig tcfg = cfg.train;
      tcfg.seed = seed;
      objectives::TrainResult tr =
          objectives::train(source, target, cfg.objective, tcfg, mspec);
      per_seed.push_back(budget_sweep(
          tr.model, target, base, cfg.sweep.eps_list, cfg.sweep.jmax_list,
          sweep_dir / ("seed_" + std::to_string(seed)), seed));
    }

    SweepResult agg;
    agg.eps_list = cfg.sweep.eps_list;
    agg.jmax_list = cfg.sweep.jmax_list;
    for (std::size_t ei = 0; ei < agg.eps_list.size(); ++ei) {
      std::vector<double> row;
      for (std::size_t ji = 0; ji < agg.jmax_list.size(); ++ji) {
        std::vector<double> cell;
        for (const auto& s : per_seed) cell.push_back(s.accuracy[ei][ji]);
        row.push_back(median(cell));
      }
      agg.accuracy.push_back(std::move(row));
    }
    write_sweep_outputs(agg, sweep_dir);
    std::cout << "sweep written to " << (sweep_dir / "budget_sweep.csv")
              << "\n";
    return 0;
  });
}

int run_sanity(const ExperimentConfig& cfg) {
  return guarded([&] {
    std::filesystem::create_directories(cfg.output_dir);
    std::uint64_t seed = cfg.seeds.front();
    auto [source, target] = cfg.data.make(derive_seed(seed, "data"));
    nn::ModelSpec mspec = resolve_model_spec(cfg, source);

    objectives::TrainConfig tcfg = cfg.train;
    tcfg.seed = seed;

    objectives::ObjectiveSpec natural;
    natural.variant = objectives::Variant::natural;
    nn::UDAModel natural_model =
        objectives::train(source, target, natural, tcfg, mspec).model;

    objectives::ObjectiveSpec defended = cfg.objective;
    defended.variant =
        objectives::variant_from_name(cfg.sanity_defended_variant);
    if (cfg.sanity_defended_variant == "artuda") {
      defended.batch_mode = objectives::BatchMode::STTt;
    }
    nn::UDAModel defended_model =
        objectives::train(source, target, defended, tcfg, mspec).model;

    nn::UDAModel substitute =
        train_substitute(cfg, source, target, mspec, seed);

    int j_max = 20;
    for (const auto& atk : cfg.eval.attacks) {
      if (atk.name == "pgd") j_max = atk.config.j_max;
    }
    std::vector<double> grid = cfg.sweep.eps_list;
    if (grid.empty()) grid = {0.0, 0.05, 0.1, 0.2, 0.4};

    SanityReport report =
        sanity_suite(natural_model, defended_model, substitute, target,
                     cfg.eval.epsilon, j_max, grid, seed);

    std::ofstream md(cfg.output_dir / "sanity.md", std::ios::trunc);
    md << "# Sanity checks (" << cfg.experiment_id << ")\n\n";
    for (const auto& check : report.checks) {
      std::string line = std::string(check.pass ? "PASS" : "FAIL") + " " +
                         check.name + ": " + check.detail;
      std::cout << line << "\n";
      md << "- " << line << "\n";
    }
    return report.all_pass() ? 0 : 1;
  });
}

}  // namespace artuda::evalkit
