#pragma once

// Run configuration: a JSON document validated against a strict schema
// (unknown keys rejected, types checked), expanded with defaults into a
// canonical resolved form that is echoed next to every run's outputs.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tea/adapt.hpp"
#include "tea/shiftbench.hpp"

namespace tea {

using Json = nlohmann::ordered_json;

inline constexpr int kResultsSchemaVersion = 1;

namespace cfgdetail {

inline void reject_unknown_keys(const Json& obj, const std::set<std::string>& known,
                                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("config: unknown key '" + where + it.key() + "'");
}

inline const Json* get(const Json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double num(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError("config: '" + where + "' must be a number");
  return j.get<double>();
}

inline std::int64_t integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError("config: '" + where + "' must be an integer");
  return j.get<std::int64_t>();
}

inline std::string str(const Json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError("config: '" + where + "' must be a string");
  return j.get<std::string>();
}

inline bool boolean(const Json& j, const std::string& where) {
  if (!j.is_boolean()) throw ConfigError("config: '" + where + "' must be a boolean");
  return j.get<bool>();
}

}  // namespace cfgdetail

struct ModelCfg {
  std::string arch = "cnn";  // "cnn" or "mlp"
  Shape input;               // {C,H,W} for cnn, {D} for mlp
  std::size_t classes = 4;
  std::vector<std::size_t> conv_channels{8, 16};
  std::size_t hidden = 32;
  std::string norm = "batch";  // "batch" or "group"
  std::size_t group_count = 4;
};

struct DataCfg {
  std::string kind = "synth_images";  // synth_images | mixture2d | idx
  // synth_images
  std::size_t classes = 4;
  std::size_t image_size = 16;
  std::size_t train_per_class = 400;
  std::size_t test_per_class = 150;
  // mixture2d
  Mixture2DSpec mixture;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  // optional corruption of the test split (adapt runs)
  bool has_corruption = false;
  CorruptionSpec corruption;
};

struct TrainCfg {
  int epochs = 6;
  std::size_t batch_size = 64;
  double lr = 0.001;
  double running_momentum = 0.1;
};

struct EvalCfg {
  std::vector<CorruptionKind> kinds;  // default: all seven
  std::vector<int> severities{1, 2, 3, 4, 5};
  std::size_t batch_size = 256;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  ModelCfg model;
  DataCfg data;
  TrainCfg train;
  AdaptConfig adapt;
  std::size_t adapt_batch_size = 200;
  EvalCfg eval;
  Json resolved;  // canonical defaults-expanded echo
};

namespace cfgdetail {

inline AdaptMethod method_from_name(const std::string& s) {
  if (s == "TEA") return AdaptMethod::TEA;
  if (s == "BN") return AdaptMethod::BN;
  if (s == "TENT") return AdaptMethod::TENT;
  if (s == "PL") return AdaptMethod::PL;
  if (s == "SOURCE") return AdaptMethod::SOURCE;
  throw ConfigError("config: unknown adapt method '" + s + "'");
}

inline SgldInit sgld_init_from_name(const std::string& s) {
  if (s == "uniform") return SgldInit::Uniform;
  if (s == "gaussian") return SgldInit::Gaussian;
  throw ConfigError("config: unknown sgld init '" + s + "'");
}

inline SgldScaling sgld_scaling_from_name(const std::string& s) {
  if (s == "paper_literal") return SgldScaling::PaperLiteral;
  if (s == "decoupled") return SgldScaling::Decoupled;
  if (s == "exact_langevin") return SgldScaling::ExactLangevin;
  throw ConfigError("config: unknown sgld scaling '" + s + "'");
}

inline const char* sgld_init_name(SgldInit i) {
  return i == SgldInit::Uniform ? "uniform" : "gaussian";
}

inline const char* sgld_scaling_name(SgldScaling s) {
  switch (s) {
    case SgldScaling::PaperLiteral: return "paper_literal";
    case SgldScaling::Decoupled: return "decoupled";
    case SgldScaling::ExactLangevin: return "exact_langevin";
  }
  return "?";
}

}  // namespace cfgdetail

inline RunConfig parse_run_config(const Json& root) {
  using namespace cfgdetail;
  if (!root.is_object()) throw ConfigError("config: root must be an object");
  reject_unknown_keys(root, {"seed", "output_dir", "model", "data", "train", "adapt", "eval"},
                      "");

  RunConfig cfg;
  if (auto* j = get(root, "seed")) cfg.seed = std::uint64_t(integer(*j, "seed"));
  if (auto* j = get(root, "output_dir")) cfg.output_dir = str(*j, "output_dir");

  if (auto* jm = get(root, "model")) {
    reject_unknown_keys(*jm,
                        {"arch", "input", "classes", "conv_channels", "hidden", "norm",
                         "group_count"},
                        "model.");
    if (auto* j = get(*jm, "arch")) {
      cfg.model.arch = str(*j, "model.arch");
      if (cfg.model.arch != "cnn" && cfg.model.arch != "mlp")
        throw ConfigError("config: model.arch must be 'cnn' or 'mlp'");
    }
    if (auto* j = get(*jm, "input")) {
      if (!j->is_array()) throw ConfigError("config: model.input must be an array");
      cfg.model.input.clear();
      for (const auto& d : *j) cfg.model.input.push_back(std::size_t(integer(d, "model.input")));
    }
    if (auto* j = get(*jm, "classes")) cfg.model.classes = std::size_t(integer(*j, "model.classes"));
    if (auto* j = get(*jm, "conv_channels")) {
      if (!j->is_array()) throw ConfigError("config: model.conv_channels must be an array");
      cfg.model.conv_channels.clear();
      for (const auto& d : *j)
        cfg.model.conv_channels.push_back(std::size_t(integer(d, "model.conv_channels")));
      if (cfg.model.conv_channels.size() != 2)
        throw ConfigError("config: model.conv_channels must have exactly 2 entries");
    }
    if (auto* j = get(*jm, "hidden")) cfg.model.hidden = std::size_t(integer(*j, "model.hidden"));
    if (auto* j = get(*jm, "norm")) {
      cfg.model.norm = str(*j, "model.norm");
      if (cfg.model.norm != "batch" && cfg.model.norm != "group")
        throw ConfigError("config: model.norm must be 'batch' or 'group'");
    }
    if (auto* j = get(*jm, "group_count"))
      cfg.model.group_count = std::size_t(integer(*j, "model.group_count"));
  }

  if (auto* jd = get(root, "data")) {
    reject_unknown_keys(*jd,
                        {"kind", "classes", "image_size", "train_per_class", "test_per_class",
                         "mixture_classes", "shift", "train_images", "train_labels",
                         "test_images", "test_labels", "corruption"},
                        "data.");
    if (auto* j = get(*jd, "kind")) cfg.data.kind = str(*j, "data.kind");
    if (cfg.data.kind != "synth_images" && cfg.data.kind != "mixture2d" && cfg.data.kind != "idx")
      throw ConfigError("config: data.kind must be synth_images, mixture2d or idx");
    if (auto* j = get(*jd, "classes")) cfg.data.classes = std::size_t(integer(*j, "data.classes"));
    if (auto* j = get(*jd, "image_size"))
      cfg.data.image_size = std::size_t(integer(*j, "data.image_size"));
    if (auto* j = get(*jd, "train_per_class"))
      cfg.data.train_per_class = std::size_t(integer(*j, "data.train_per_class"));
    if (auto* j = get(*jd, "test_per_class"))
      cfg.data.test_per_class = std::size_t(integer(*j, "data.test_per_class"));
    if (auto* j = get(*jd, "mixture_classes")) {
      if (!j->is_array()) throw ConfigError("config: data.mixture_classes must be an array");
      cfg.data.mixture.classes.clear();
      for (const auto& c : *j) {
        reject_unknown_keys(c, {"mean", "cov"}, "data.mixture_classes[].");
        Mixture2DClass mc;
        const auto* mean = get(c, "mean");
        const auto* cov = get(c, "cov");
        if (!mean || !mean->is_array() || mean->size() != 2)
          throw ConfigError("config: mixture class mean must be [x,y]");
        if (!cov || !cov->is_array() || cov->size() != 4)
          throw ConfigError("config: mixture class cov must be [a,b,b,c]");
        mc.mean = {num((*mean)[0], "mean"), num((*mean)[1], "mean")};
        mc.cov = {num((*cov)[0], "cov"), num((*cov)[1], "cov"), num((*cov)[2], "cov"),
                  num((*cov)[3], "cov")};
        cfg.data.mixture.classes.push_back(mc);
      }
    }
    if (auto* j = get(*jd, "shift")) {
      reject_unknown_keys(*j, {"rotation_deg", "translation", "scale", "noise_std"},
                          "data.shift.");
      if (auto* v = get(*j, "rotation_deg"))
        cfg.data.mixture.shift.rotation_deg = num(*v, "data.shift.rotation_deg");
      if (auto* v = get(*j, "translation")) {
        if (!v->is_array() || v->size() != 2)
          throw ConfigError("config: data.shift.translation must be [x,y]");
        cfg.data.mixture.shift.translation = {num((*v)[0], "translation"),
                                              num((*v)[1], "translation")};
      }
      if (auto* v = get(*j, "scale")) cfg.data.mixture.shift.scale = num(*v, "data.shift.scale");
      if (auto* v = get(*j, "noise_std"))
        cfg.data.mixture.shift.noise_std = num(*v, "data.shift.noise_std");
    }
    for (auto [key, dst] : std::initializer_list<std::pair<const char*, std::string*>>{
             {"train_images", &cfg.data.train_images},
             {"train_labels", &cfg.data.train_labels},
             {"test_images", &cfg.data.test_images},
             {"test_labels", &cfg.data.test_labels}})
      if (auto* j = get(*jd, key)) *dst = str(*j, std::string("data.") + key);
    if (auto* j = get(*jd, "corruption")) {
      reject_unknown_keys(*j, {"kind", "severity"}, "data.corruption.");
      cfg.data.has_corruption = true;
      if (auto* v = get(*j, "kind"))
        cfg.data.corruption.kind = corruption_from_name(str(*v, "data.corruption.kind"));
      if (auto* v = get(*j, "severity"))
        cfg.data.corruption.severity = int(integer(*v, "data.corruption.severity"));
      cfg.data.corruption.validate();
    }
  }

  if (auto* jt = get(root, "train")) {
    reject_unknown_keys(*jt, {"epochs", "batch_size", "lr", "running_momentum"}, "train.");
    if (auto* j = get(*jt, "epochs")) cfg.train.epochs = int(integer(*j, "train.epochs"));
    if (auto* j = get(*jt, "batch_size"))
      cfg.train.batch_size = std::size_t(integer(*j, "train.batch_size"));
    if (auto* j = get(*jt, "lr")) cfg.train.lr = num(*j, "train.lr");
    if (auto* j = get(*jt, "running_momentum"))
      cfg.train.running_momentum = num(*j, "train.running_momentum");
    if (cfg.train.epochs < 1) throw ConfigError("config: train.epochs must be >= 1");
    if (cfg.train.batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
  }

  if (auto* ja = get(root, "adapt")) {
    reject_unknown_keys(*ja,
                        {"method", "steps", "rate", "mode", "batch_size",
                         "pl_confidence_threshold", "optimizer", "sgld"},
                        "adapt.");
    if (auto* j = get(*ja, "method"))
      cfg.adapt.method = method_from_name(str(*j, "adapt.method"));
    if (auto* j = get(*ja, "steps")) cfg.adapt.steps = int(integer(*j, "adapt.steps"));
    if (auto* j = get(*ja, "rate")) cfg.adapt.rate = num(*j, "adapt.rate");
    if (auto* j = get(*ja, "mode")) {
      const std::string mode = str(*j, "adapt.mode");
      if (mode == "continual") cfg.adapt.mode = AdaptMode::Continual;
      else if (mode == "episodic") cfg.adapt.mode = AdaptMode::Episodic;
      else throw ConfigError("config: adapt.mode must be 'continual' or 'episodic'");
    }
    if (auto* j = get(*ja, "batch_size"))
      cfg.adapt_batch_size = std::size_t(integer(*j, "adapt.batch_size"));
    if (auto* j = get(*ja, "pl_confidence_threshold"))
      cfg.adapt.pl_confidence_threshold = num(*j, "adapt.pl_confidence_threshold");
    if (auto* jo = get(*ja, "optimizer")) {
      reject_unknown_keys(*jo, {"kind", "beta1", "beta2", "eps"}, "adapt.optimizer.");
      if (auto* j = get(*jo, "kind")) {
        const std::string kind = str(*j, "adapt.optimizer.kind");
        if (kind == "adam") cfg.adapt.optimizer.kind = OptimizerKind::Adam;
        else if (kind == "sgd") cfg.adapt.optimizer.kind = OptimizerKind::Sgd;
        else throw ConfigError("config: adapt.optimizer.kind must be 'adam' or 'sgd'");
      }
      if (auto* j = get(*jo, "beta1")) cfg.adapt.optimizer.beta1 = num(*j, "beta1");
      if (auto* j = get(*jo, "beta2")) cfg.adapt.optimizer.beta2 = num(*j, "beta2");
      if (auto* j = get(*jo, "eps")) cfg.adapt.optimizer.eps = num(*j, "eps");
    }
    if (auto* js = get(*ja, "sgld")) {
      reject_unknown_keys(*js, {"steps", "step_size", "noise_std", "init", "clamp", "scaling"},
                          "adapt.sgld.");
      if (auto* j = get(*js, "steps")) cfg.adapt.sgld.steps = int(integer(*j, "sgld.steps"));
      if (auto* j = get(*js, "step_size"))
        cfg.adapt.sgld.step_size = num(*j, "sgld.step_size");
      if (auto* j = get(*js, "noise_std"))
        cfg.adapt.sgld.noise_std = num(*j, "sgld.noise_std");
      if (auto* j = get(*js, "init"))
        cfg.adapt.sgld.init = sgld_init_from_name(str(*j, "sgld.init"));
      if (auto* j = get(*js, "clamp")) cfg.adapt.sgld.clamp_to_range = boolean(*j, "sgld.clamp");
      if (auto* j = get(*js, "scaling"))
        cfg.adapt.sgld.scaling = sgld_scaling_from_name(str(*j, "sgld.scaling"));
    }
    cfg.adapt.validate();
  }

  if (auto* je = get(root, "eval")) {
    reject_unknown_keys(*je, {"kinds", "severities", "batch_size"}, "eval.");
    if (auto* j = get(*je, "kinds")) {
      if (!j->is_array()) throw ConfigError("config: eval.kinds must be an array");
      cfg.eval.kinds.clear();
      for (const auto& k : *j) cfg.eval.kinds.push_back(corruption_from_name(str(k, "eval.kinds")));
    }
    if (auto* j = get(*je, "severities")) {
      if (!j->is_array()) throw ConfigError("config: eval.severities must be an array");
      cfg.eval.severities.clear();
      for (const auto& s : *j) {
        const int sv = int(integer(s, "eval.severities"));
        if (sv < 1 || sv > kSeverityLevels)
          throw ConfigError("config: eval severity out of range");
        cfg.eval.severities.push_back(sv);
      }
    }
    if (auto* j = get(*je, "batch_size"))
      cfg.eval.batch_size = std::size_t(integer(*j, "eval.batch_size"));
  }
  if (cfg.eval.kinds.empty())
    for (const auto& [kind, name] : corruption_kinds()) cfg.eval.kinds.push_back(kind);

  // Fill arch-dependent defaults.
  if (cfg.model.input.empty())
    cfg.model.input = cfg.model.arch == "cnn" ? Shape{1, cfg.data.image_size, cfg.data.image_size}
                                              : Shape{2};

  // Canonical resolved echo.
  Json r;
  r["seed"] = cfg.seed;
  r["output_dir"] = cfg.output_dir;
  Json jm;
  jm["arch"] = cfg.model.arch;
  jm["input"] = cfg.model.input;
  jm["classes"] = cfg.model.classes;
  jm["conv_channels"] = cfg.model.conv_channels;
  jm["hidden"] = cfg.model.hidden;
  jm["norm"] = cfg.model.norm;
  jm["group_count"] = cfg.model.group_count;
  r["model"] = jm;
  Json jd;
  jd["kind"] = cfg.data.kind;
  jd["classes"] = cfg.data.classes;
  jd["image_size"] = cfg.data.image_size;
  jd["train_per_class"] = cfg.data.train_per_class;
  jd["test_per_class"] = cfg.data.test_per_class;
  if (cfg.data.kind == "mixture2d") {
    Json jmc = Json::array();
    for (const auto& c : cfg.data.mixture.classes) {
      Json e;
      e["mean"] = c.mean;
      e["cov"] = c.cov;
      jmc.push_back(e);
    }
    jd["mixture_classes"] = jmc;
    Json js;
    js["rotation_deg"] = cfg.data.mixture.shift.rotation_deg;
    js["translation"] = cfg.data.mixture.shift.translation;
    js["scale"] = cfg.data.mixture.shift.scale;
    js["noise_std"] = cfg.data.mixture.shift.noise_std;
    jd["shift"] = js;
  }
  if (cfg.data.kind == "idx") {
    jd["train_images"] = cfg.data.train_images;
    jd["train_labels"] = cfg.data.train_labels;
    jd["test_images"] = cfg.data.test_images;
    jd["test_labels"] = cfg.data.test_labels;
  }
  if (cfg.data.has_corruption) {
    Json jc;
    jc["kind"] = corruption_name(cfg.data.corruption.kind);
    jc["severity"] = cfg.data.corruption.severity;
    jd["corruption"] = jc;
  }
  r["data"] = jd;
  Json jt;
  jt["epochs"] = cfg.train.epochs;
  jt["batch_size"] = cfg.train.batch_size;
  jt["lr"] = cfg.train.lr;
  jt["running_momentum"] = cfg.train.running_momentum;
  r["train"] = jt;
  Json ja;
  ja["method"] = adapt_method_name(cfg.adapt.method);
  ja["steps"] = cfg.adapt.steps;
  ja["rate"] = cfg.adapt.rate;
  ja["mode"] = cfg.adapt.mode == AdaptMode::Continual ? "continual" : "episodic";
  ja["batch_size"] = cfg.adapt_batch_size;
  ja["pl_confidence_threshold"] = cfg.adapt.pl_confidence_threshold;
  Json jo;
  jo["kind"] = cfg.adapt.optimizer.kind == OptimizerKind::Adam ? "adam" : "sgd";
  jo["beta1"] = cfg.adapt.optimizer.beta1;
  jo["beta2"] = cfg.adapt.optimizer.beta2;
  jo["eps"] = cfg.adapt.optimizer.eps;
  ja["optimizer"] = jo;
  Json js;
  js["steps"] = cfg.adapt.sgld.steps;
  js["step_size"] = cfg.adapt.sgld.step_size;
  js["noise_std"] = cfg.adapt.sgld.noise_std;
  js["init"] = cfgdetail::sgld_init_name(cfg.adapt.sgld.init);
  js["clamp"] = cfg.adapt.sgld.clamp_to_range;
  js["scaling"] = cfgdetail::sgld_scaling_name(cfg.adapt.sgld.scaling);
  ja["sgld"] = js;
  r["adapt"] = ja;
  Json je;
  Json jk = Json::array();
  for (auto k : cfg.eval.kinds) jk.push_back(corruption_name(k));
  je["kinds"] = jk;
  je["severities"] = cfg.eval.severities;
  je["batch_size"] = cfg.eval.batch_size;
  r["eval"] = je;
  cfg.resolved = std::move(r);
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return parse_run_config(j);
}

inline std::string config_hash(const Json& resolved) {
  const std::string dump = resolved.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

}  // namespace tea
