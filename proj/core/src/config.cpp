#include "artuda/config.hpp"

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "artuda/errors.hpp"

namespace artuda::evalkit {

using nlohmann::json;

std::pair<data::DomainDataset, data::DomainDataset> DataConfig::make(
    std::uint64_t seed) const {
  if (generator == "two_moons") {
    return data::gen_two_moons_shift(n, noise_sd, rotation_deg, translation,
                                     seed);
  }
  if (generator == "blobs") {
    return data::gen_blobs_shift(num_classes, n, center_scale, shift,
                                 covariance_scale, seed);
  }
  if (generator == "csv") {
    auto src = data::load_csv(source_csv, source_schema);
    auto tgt = data::load_csv(target_csv, target_schema);
    return {std::move(src), std::move(tgt)};
  }
  throw ConfigError("data.generator: unknown generator '" + generator + "'");
}

void ExperimentConfig::validate() const {
  if (experiment_id.empty()) throw ConfigError("experiment_id: empty");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed required");
  model.validate();
  objective.validate();
  train.validate();
  for (const auto& atk : eval.attacks) {
    if (atk.name.empty()) throw ConfigError("eval.attacks: unnamed attack");
    atk.config.validate();
  }
  if (eval.blackbox && eval.blackbox->enabled) {
    eval.blackbox->config.validate();
  }
  for (double l : sweep.lambda_list) {
    if (l < 0) throw ConfigError("sweep.lambda_list: negative lambda");
  }
}

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError("config field '" + path + "': " + what);
}

template <typename T>
T get_or(const json& j, const std::string& path, const std::string& key,
         T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    field_error(path + "." + key, e.what());
  }
}

attacks::Kind attack_kind_from(const std::string& name, const std::string& path) {
  if (name == "fgsm") return attacks::Kind::fgsm;
  if (name == "pgd") return attacks::Kind::pgd;
  if (name == "mifgsm") return attacks::Kind::mifgsm;
  field_error(path, "unknown attack kind '" + name + "'");
}

attacks::LossKind loss_kind_from(const std::string& name,
                                 const std::string& path) {
  if (name == "ce") return attacks::LossKind::ce;
  if (name == "kl") return attacks::LossKind::kl;
  if (name == "l1") return attacks::LossKind::l1;
  if (name == "l2") return attacks::LossKind::l2;
  field_error(path, "unknown loss kind '" + name + "'");
}

attacks::AttackConfig parse_attack(const json& j, const std::string& path,
                                   double default_eps) {
  attacks::AttackConfig cfg;
  cfg.kind = attack_kind_from(get_or<std::string>(j, path, "kind", "pgd"), path);
  cfg.epsilon = get_or<double>(j, path, "epsilon", default_eps);
  if (j.contains("alpha")) cfg.alpha = get_or<double>(j, path, "alpha", 0.0);
  cfg.j_max = get_or<int>(j, path, "j_max", cfg.kind == attacks::Kind::fgsm ? 1 : 3);
  cfg.random_start = get_or<bool>(j, path, "random_start",
                                  cfg.kind == attacks::Kind::pgd);
  cfg.momentum_mu = get_or<double>(j, path, "momentum_mu", 1.0);
  if (j.contains("clip_bounds")) {
    auto v = get_or<std::vector<double>>(j, path, "clip_bounds", {});
    if (v.size() != 2) field_error(path + ".clip_bounds", "expects [lo, hi]");
    cfg.clip_bounds = {{v[0], v[1]}};
  }
  cfg.loss = loss_kind_from(get_or<std::string>(j, path, "loss", "ce"), path);
  if (j.contains("supervision")) {
    std::string s = get_or<std::string>(j, path, "supervision", "labels");
    if (s == "labels")
      cfg.supervision = attacks::Supervision::labels;
    else if (s == "self_logits")
      cfg.supervision = attacks::Supervision::self_logits;
    else
      field_error(path + ".supervision", "unknown supervision '" + s + "'");
  }
  cfg.bn_batch_stats = get_or<bool>(j, path, "bn_batch_stats", false);
  return cfg;
}

data::CsvSchema parse_schema(const json& j, const std::string& path,
                             data::DomainTag tag) {
  data::CsvSchema schema;
  schema.tag = tag;
  schema.feature_columns =
      get_or<std::vector<std::string>>(j, path, "feature_columns", {});
  if (j.contains("label_column"))
    schema.label_column = get_or<std::string>(j, path, "label_column", "");
  if (j.contains("num_classes"))
    schema.num_classes = get_or<std::size_t>(j, path, "num_classes", 0);
  return schema;
}

std::vector<EvalAttack> default_eval_attacks(double eps) {
  // FGSM, the Table-style PGD-20, MI-FGSM at the training-default budget.
  std::vector<EvalAttack> out;
  out.push_back({"fgsm", attacks::AttackConfig::fgsm_config(eps)});
  out.push_back({"pgd", attacks::AttackConfig::pgd_config(eps, 20)});
  out.push_back({"mifgsm", attacks::AttackConfig::mifgsm_config(eps, 3)});
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: parse error at byte " + std::to_string(e.byte) +
                      ": " + e.what());
  }

  ExperimentConfig cfg;
  cfg.experiment_id =
      get_or<std::string>(root, "", "experiment_id", cfg.experiment_id);
  cfg.output_dir = get_or<std::string>(root, "", "output_dir", "out");
  if (root.contains("seeds")) {
    cfg.seeds = get_or<std::vector<std::uint64_t>>(root, "", "seeds", {});
  } else if (root.contains("seed")) {
    cfg.seeds = {get_or<std::uint64_t>(root, "", "seed", 1)};
  }

  if (root.contains("data")) {
    const json& d = root["data"];
    cfg.data.generator = get_or<std::string>(d, "data", "generator", "two_moons");
    cfg.data.n = get_or<std::size_t>(d, "data", "n", cfg.data.n);
    cfg.data.noise_sd = get_or<double>(d, "data", "noise_sd", cfg.data.noise_sd);
    cfg.data.rotation_deg =
        get_or<double>(d, "data", "rotation_deg", cfg.data.rotation_deg);
    if (d.contains("translation")) {
      auto v = get_or<std::vector<double>>(d, "data", "translation", {});
      if (v.size() != 2) field_error("data.translation", "expects [dx, dy]");
      cfg.data.translation = {{v[0], v[1]}};
    }
    cfg.data.num_classes =
        get_or<std::size_t>(d, "data", "num_classes", cfg.data.num_classes);
    cfg.data.center_scale =
        get_or<double>(d, "data", "center_scale", cfg.data.center_scale);
    if (d.contains("shift")) {
      auto v = get_or<std::vector<double>>(d, "data", "shift", {});
      if (v.size() != 2) field_error("data.shift", "expects [dx, dy]");
      cfg.data.shift = {{v[0], v[1]}};
    }
    cfg.data.covariance_scale = get_or<double>(d, "data", "covariance_scale",
                                               cfg.data.covariance_scale);
    cfg.data.source_csv = get_or<std::string>(d, "data", "source_csv", "");
    cfg.data.target_csv = get_or<std::string>(d, "data", "target_csv", "");
    if (d.contains("source_schema")) {
      cfg.data.source_schema = parse_schema(d["source_schema"],
                                            "data.source_schema",
                                            data::DomainTag::source);
    }
    if (d.contains("target_schema")) {
      cfg.data.target_schema = parse_schema(d["target_schema"],
                                            "data.target_schema",
                                            data::DomainTag::target);
    }
  }

  if (root.contains("model")) {
    const json& m = root["model"];
    cfg.model.feature_widths = get_or<std::vector<std::size_t>>(
        m, "model", "feature_widths", cfg.model.feature_widths);
    cfg.model.classifier_widths = get_or<std::vector<std::size_t>>(
        m, "model", "classifier_widths", cfg.model.classifier_widths);
    cfg.model.discriminator_widths = get_or<std::vector<std::size_t>>(
        m, "model", "discriminator_widths", cfg.model.discriminator_widths);
  }

  double eval_eps = 0.1;
  if (root.contains("eval")) {
    eval_eps = get_or<double>(root["eval"], "eval", "epsilon", eval_eps);
  }
  cfg.eval.epsilon = eval_eps;

  if (root.contains("objective")) {
    const json& o = root["objective"];
    std::string vname = get_or<std::string>(o, "objective", "variant", "natural");
    cfg.objective.variant = objectives::variant_from_name(vname);
    // "artuda" implies the single-mini-batch composition unless overridden
    if (vname == "artuda") cfg.objective.batch_mode = objectives::BatchMode::STTt;
    if (o.contains("batch_mode")) {
      cfg.objective.batch_mode = objectives::batch_mode_from_name(
          get_or<std::string>(o, "objective", "batch_mode", "ST_Tt"));
    }
    if (o.contains("loss_kind")) {
      cfg.objective.ssat_loss = loss_kind_from(
          get_or<std::string>(o, "objective", "loss_kind", "kl"),
          "objective.loss_kind");
    }
    cfg.objective.lambda_weight =
        get_or<double>(o, "objective", "lambda", 1.0);
    if (o.contains("attack")) {
      cfg.objective.inner_attack =
          parse_attack(o["attack"], "objective.attack", eval_eps);
    } else {
      cfg.objective.inner_attack =
          attacks::AttackConfig::pgd_config(eval_eps, 3);
    }
  }

  if (root.contains("train")) {
    const json& t = root["train"];
    cfg.train.epochs = get_or<int>(t, "train", "epochs", cfg.train.epochs);
    cfg.train.batch_size =
        get_or<std::size_t>(t, "train", "batch_size", cfg.train.batch_size);
    cfg.train.learning_rate =
        get_or<double>(t, "train", "learning_rate", cfg.train.learning_rate);
    cfg.train.sgd_momentum =
        get_or<double>(t, "train", "sgd_momentum", cfg.train.sgd_momentum);
    cfg.train.grl_coefficient = get_or<double>(t, "train", "grl_coefficient",
                                               cfg.train.grl_coefficient);
  }

  if (root.contains("eval")) {
    const json& e = root["eval"];
    if (e.contains("attacks")) {
      for (std::size_t i = 0; i < e["attacks"].size(); ++i) {
        const json& a = e["attacks"][i];
        std::string path = "eval.attacks[" + std::to_string(i) + "]";
        EvalAttack atk;
        atk.name = get_or<std::string>(a, path, "name", "");
        if (atk.name.empty()) field_error(path + ".name", "required");
        atk.config = parse_attack(a, path, eval_eps);
        cfg.eval.attacks.push_back(std::move(atk));
      }
    }
    if (e.contains("blackbox")) {
      const json& b = e["blackbox"];
      BlackboxConfig bb;
      bb.enabled = get_or<bool>(b, "eval.blackbox", "enabled", true);
      bb.config = parse_attack(b, "eval.blackbox", eval_eps);
      if (!b.contains("kind")) bb.config.kind = attacks::Kind::mifgsm;
      if (!b.contains("random_start")) bb.config.random_start = false;
      bb.substitute_widths = get_or<std::vector<std::size_t>>(
          b, "eval.blackbox", "substitute_widths", bb.substitute_widths);
      cfg.eval.blackbox = std::move(bb);
    }
    cfg.eval.feature_distance =
        get_or<bool>(e, "eval", "feature_distance", true);
    cfg.eval.classwise = get_or<bool>(e, "eval", "classwise", false);
  }
  if (cfg.eval.attacks.empty()) {
    cfg.eval.attacks = default_eval_attacks(eval_eps);
  }
  if (!cfg.eval.blackbox) {
    BlackboxConfig bb;
    bb.config = attacks::AttackConfig::mifgsm_config(eval_eps, 3);
    cfg.eval.blackbox = std::move(bb);
  }

  if (root.contains("sweep")) {
    const json& s = root["sweep"];
    cfg.sweep.eps_list =
        get_or<std::vector<double>>(s, "sweep", "eps_list", {});
    cfg.sweep.jmax_list = get_or<std::vector<int>>(s, "sweep", "jmax_list", {});
    cfg.sweep.lambda_list =
        get_or<std::vector<double>>(s, "sweep", "lambda_list", {});
  }
  if (root.contains("sanity")) {
    cfg.sanity_defended_variant = get_or<std::string>(
        root["sanity"], "sanity", "defended_variant", "artuda");
  }

  if (const char* env = std::getenv("ARTUDA_OUTPUT_DIR")) {
    cfg.output_dir = env;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse_config(text);
}

}  // namespace artuda::evalkit
