#include "mitonet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mitonet/errors.hpp"

namespace mitonet {
namespace {

using nlohmann::json;

// Reads keys out of one JSON object and rejects any it was not asked about.
class SectionReader {
 public:
  SectionReader(const json& doc, std::string section) : section_(std::move(section)) {
    if (!doc.is_object()) throw ConfigError(section_ + ": expected an object");
    doc_ = &doc;
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_->contains(key)) return;
    try {
      out = doc_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return doc_->contains(key) ? &doc_->at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : doc_->items()) {
      if (!seen_.count(key)) {
        throw ConfigError("unknown key " + (section_.empty() ? key : section_ + "." + key));
      }
    }
  }

 private:
  const json* doc_ = nullptr;
  std::string section_;
  std::set<std::string> seen_;
};

json vec3(const Eigen::Vector3d& v) { return json::array({v(0), v(1), v(2)}); }

Eigen::Vector3d vec3_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// "auto" or a positive number.
void read_weight(SectionReader& r, const char* key, double& value, bool& is_auto) {
  const json* j = r.child(key);
  if (!j) return;
  if (j->is_string()) {
    if (j->get<std::string>() != "auto") {
      throw ConfigError(std::string("loss.") + key + ": expected a number or \"auto\"");
    }
    is_auto = true;
  } else if (j->is_number()) {
    value = j->get<double>();
    is_auto = false;
  } else {
    throw ConfigError(std::string("loss.") + key + ": expected a number or \"auto\"");
  }
}

}  // namespace

std::string to_string(NumericMode mode) {
  return mode == NumericMode::reference64 ? "reference64" : "fast32";
}

NumericMode parse_numeric_mode(const std::string& text) {
  if (text == "reference64") return NumericMode::reference64;
  if (text == "fast32") return NumericMode::fast32;
  throw ConfigError("numeric mode must be reference64 or fast32, got " + text);
}

void RunConfig::validate() const {
  stain.params.validate();
  augment.validate();
  loss.cfg.validate();
  model.validate();
  optim.validate();
  if (!(data.val_fraction > 0.0 && data.val_fraction < 1.0)) {
    throw ConfigError("data.val_fraction must lie in (0, 1)");
  }
  if (!(data.threshold >= 0.0 && data.threshold <= 1.0)) {
    throw ConfigError("data.threshold must lie in [0, 1]");
  }
  if (model.input_size != augment.out_size) {
    throw ConfigError("model.input_size must equal augment.out_size");
  }
}

json to_json(const RunConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.model.blocks) blocks.push_back({b.layers, b.growth_rate});
  const auto& sp = c.stain.params;
  return {
      {"seed", c.seed},
      {"numeric_mode", to_string(c.numeric_mode)},
      {"stain",
       {{"i0", sp.i0},
        {"beta", sp.beta},
        {"alpha_percentile", sp.alpha_percentile},
        {"conc_percentile", sp.conc_percentile},
        {"target_matrix",
         {{"hematoxylin", vec3(sp.target_matrix.hematoxylin())},
          {"eosin", vec3(sp.target_matrix.eosin())}}},
        {"target_max_conc", sp.target_max_conc},
        {"normalize_train", c.stain.normalize_train},
        {"normalize_eval", c.stain.normalize_eval}}},
      {"augment",
       {{"crop_fraction", c.augment.crop_fraction},
        {"out_size", c.augment.out_size},
        {"p_dihedral", c.augment.p_dihedral},
        {"brightness_range", {c.augment.brightness_range.first, c.augment.brightness_range.second}},
        {"contrast_range", {c.augment.contrast_range.first, c.augment.contrast_range.second}},
        {"mean", c.augment.mean},
        {"std", c.augment.std},
        {"stain_sigma_scale", c.augment.stain_sigma_scale},
        {"stain_sigma_shift", c.augment.stain_sigma_shift}}},
      {"loss",
       {{"w1", c.loss.auto_w1 ? json("auto") : json(c.loss.cfg.w1)},
        {"w0", c.loss.auto_w0 ? json("auto") : json(c.loss.cfg.w0)},
        {"alpha", c.loss.cfg.alpha},
        {"gamma", c.loss.cfg.gamma},
        {"lambda", c.loss.cfg.lambda}}},
      {"model",
       {{"stem_channels", c.model.stem_channels},
        {"blocks", blocks},
        {"transition_compression", c.model.transition_compression},
        {"input_size", c.model.input_size}}},
      {"optim",
       {{"head_lr", c.optim.head_lr},
        {"backbone_lr_ratio", c.optim.backbone_lr_ratio},
        {"beta1", c.optim.beta1},
        {"beta2", c.optim.beta2},
        {"epsilon", c.optim.epsilon},
        {"weight_decay", c.optim.weight_decay},
        {"batch_size", c.optim.batch_size},
        {"max_epochs", c.optim.max_epochs},
        {"patience", c.optim.patience}}},
      {"data",
       {{"val_fraction", c.data.val_fraction},
        {"use_sampler", c.data.use_sampler},
        {"threshold", c.data.threshold}}},
  };
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig c;
  SectionReader top(doc, "");
  top.read("seed", c.seed);
  std::string mode = to_string(c.numeric_mode);
  top.read("numeric_mode", mode);
  c.numeric_mode = parse_numeric_mode(mode);

  if (const json* j = top.child("stain")) {
    SectionReader r(*j, "stain");
    auto& sp = c.stain.params;
    r.read("i0", sp.i0);
    r.read("beta", sp.beta);
    r.read("alpha_percentile", sp.alpha_percentile);
    r.read("conc_percentile", sp.conc_percentile);
    r.read("target_max_conc", sp.target_max_conc);
    r.read("normalize_train", c.stain.normalize_train);
    r.read("normalize_eval", c.stain.normalize_eval);
    if (const json* m = r.child("target_matrix")) {
      SectionReader mr(*m, "stain.target_matrix");
      const json* h = mr.child("hematoxylin");
      const json* e = mr.child("eosin");
      mr.finish();
      if (!h || !e) throw ConfigError("stain.target_matrix needs hematoxylin and eosin");
      try {
        sp.target_matrix = stain::StainMatrix(vec3_from(*h, "stain.target_matrix.hematoxylin"),
                                              vec3_from(*e, "stain.target_matrix.eosin"));
      } catch (const DegenerateStains& ex) {
        throw ConfigError(std::string("stain.target_matrix: ") + ex.what());
      }
    }
    r.finish();
  }

  if (const json* j = top.child("augment")) {
    SectionReader r(*j, "augment");
    auto& a = c.augment;
    r.read("crop_fraction", a.crop_fraction);
    r.read("out_size", a.out_size);
    r.read("p_dihedral", a.p_dihedral);
    r.read("brightness_range", a.brightness_range);
    r.read("contrast_range", a.contrast_range);
    r.read("mean", a.mean);
    r.read("std", a.std);
    r.read("stain_sigma_scale", a.stain_sigma_scale);
    r.read("stain_sigma_shift", a.stain_sigma_shift);
    r.finish();
  }

  if (const json* j = top.child("loss")) {
    SectionReader r(*j, "loss");
    read_weight(r, "w1", c.loss.cfg.w1, c.loss.auto_w1);
    read_weight(r, "w0", c.loss.cfg.w0, c.loss.auto_w0);
    r.read("alpha", c.loss.cfg.alpha);
    r.read("gamma", c.loss.cfg.gamma);
    r.read("lambda", c.loss.cfg.lambda);
    r.finish();
  }

  if (const json* j = top.child("model")) {
    SectionReader r(*j, "model");
    r.read("stem_channels", c.model.stem_channels);
    r.read("transition_compression", c.model.transition_compression);
    r.read("input_size", c.model.input_size);
    if (const json* b = r.child("blocks")) {
      std::vector<std::pair<int, int>> pairs;
      try {
        pairs = b->get<std::vector<std::pair<int, int>>>();
      } catch (const json::exception& e) {
        throw ConfigError(std::string("model.blocks: ") + e.what());
      }
      c.model.blocks.clear();
      for (auto [layers, growth] : pairs) c.model.blocks.push_back({layers, growth});
    }
    r.finish();
  }

  if (const json* j = top.child("optim")) {
    SectionReader r(*j, "optim");
    auto& o = c.optim;
    r.read("head_lr", o.head_lr);
    r.read("backbone_lr_ratio", o.backbone_lr_ratio);
    r.read("beta1", o.beta1);
    r.read("beta2", o.beta2);
    r.read("epsilon", o.epsilon);
    r.read("weight_decay", o.weight_decay);
    r.read("batch_size", o.batch_size);
    r.read("max_epochs", o.max_epochs);
    r.read("patience", o.patience);
    r.finish();
  }

  if (const json* j = top.child("data")) {
    SectionReader r(*j, "data");
    r.read("val_fraction", c.data.val_fraction);
    r.read("use_sampler", c.data.use_sampler);
    r.read("threshold", c.data.threshold);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(doc);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(cfg).dump(2) << "\n";
}

}  // namespace mitonet
