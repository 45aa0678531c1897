#include "siamreid/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace siamreid {

const char* to_string(DataFormat f) {
  switch (f) {
    case DataFormat::cuhk01: return "cuhk01";
    case DataFormat::generic: return "generic";
    case DataFormat::synthetic: return "synthetic";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("invalid value '" + value + "' for " + key + ": expected " + expected);
}

template <class Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int out{};
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size() || value.empty()) bad_value(key, value, "an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size() || value.empty()) bad_value(key, value, "a number");
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Shortest representation that reads back to the same value.
  for (int prec = 1; prec <= 17; ++prec) {
    char shorter[32];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
    double back = 0.0;
    std::from_chars(shorter, shorter + std::char_traits<char>::length(shorter), back);
    if (back == v) return shorter;
  }
  return buf;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
};

template <class M>
Field int_field(M RunConfig::*member) {
  return {[member](const RunConfig& c) { return std::to_string(c.*member); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_int<M>(k, v); }};
}

template <class S, class M>
Field nested_int(S RunConfig::*outer, M S::*member) {
  return {[=](const RunConfig& c) { return std::to_string((c.*outer).*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) { (c.*outer).*member = parse_int<M>(k, v); }};
}

template <class S>
Field nested_double(S RunConfig::*outer, double S::*member) {
  return {[=](const RunConfig& c) { return format_double((c.*outer).*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) { (c.*outer).*member = parse_double(k, v); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["seed"] = int_field(&RunConfig::seed);
    t["threads"] = int_field(&RunConfig::threads);
    t["data.path"] = {[](const RunConfig& c) { return c.data_path; },
                      [](RunConfig& c, const std::string&, const std::string& v) { c.data_path = v; }};
    t["data.format"] = {[](const RunConfig& c) { return std::string(to_string(c.format)); },
                        [](RunConfig& c, const std::string& k, const std::string& v) {
                          if (v == "cuhk01") c.format = DataFormat::cuhk01;
                          else if (v == "generic") c.format = DataFormat::generic;
                          else if (v == "synthetic") c.format = DataFormat::synthetic;
                          else bad_value(k, v, "cuhk01, generic or synthetic");
                        }};
    t["data.synth_ids"] = int_field(&RunConfig::synth_ids);
    t["data.synth_per_camera"] = int_field(&RunConfig::synth_per_camera);
    t["data.test_ids"] = int_field(&RunConfig::test_ids);
    t["eval.trials"] = int_field(&RunConfig::eval_trials);

    t["train.learning_rate"] = nested_double(&RunConfig::train, &TrainConfig::learning_rate);
    t["train.epochs"] = nested_int(&RunConfig::train, &TrainConfig::epochs);
    t["train.batch_size"] = nested_int(&RunConfig::train, &TrainConfig::batch_size);
    t["train.rho"] = nested_double(&RunConfig::train, &TrainConfig::rho);
    t["train.epsilon"] = nested_double(&RunConfig::train, &TrainConfig::epsilon);
    t["train.dropout"] = nested_double(&RunConfig::train, &TrainConfig::dropout);
    t["train.steps_per_epoch"] = nested_int(&RunConfig::train, &TrainConfig::steps_per_epoch);
    t["train.total_steps"] = {[](const RunConfig& c) {
                                return c.train.total_steps ? std::to_string(*c.train.total_steps) : std::string("auto");
                              },
                              [](RunConfig& c, const std::string& k, const std::string& v) {
                                if (v == "auto") c.train.total_steps.reset();
                                else c.train.total_steps = parse_int<std::size_t>(k, v);
                              }};
    t["train.pos_ratio"] = nested_double(&RunConfig::train, &TrainConfig::pos_ratio);

    t["augment.flip_prob"] = nested_double(&RunConfig::augment, &AugmentConfig::flip_prob);
    t["augment.zoom_min"] = nested_double(&RunConfig::augment, &AugmentConfig::zoom_min);
    t["augment.zoom_max"] = nested_double(&RunConfig::augment, &AugmentConfig::zoom_max);
    t["augment.shift"] = nested_double(&RunConfig::augment, &AugmentConfig::shift);

    t["backbone.stem_channels"] = nested_int(&RunConfig::backbone, &BackboneConfig::stem_channels);
    t["backbone.stages"] = {[](const RunConfig& c) { return format_stages(c.backbone.stages); },
                            [](RunConfig& c, const std::string& k, const std::string& v) {
                              try {
                                c.backbone.stages = parse_stages(v);
                              } catch (const ContractViolation& e) {
                                throw ConfigError(k + ": " + e.what());
                              }
                            }};
    t["backbone.descriptor_dim"] = nested_int(&RunConfig::backbone, &BackboneConfig::descriptor_dim);
    t["backbone.width_mult"] = nested_double(&RunConfig::backbone, &BackboneConfig::width_mult);
    t["backbone.depth_mult"] = nested_double(&RunConfig::backbone, &BackboneConfig::depth_mult);
    t["backbone.input_height"] = nested_int(&RunConfig::backbone, &BackboneConfig::input_height);
    t["backbone.input_width"] = nested_int(&RunConfig::backbone, &BackboneConfig::input_width);
    t["backbone.bn_momentum"] = nested_double(&RunConfig::backbone, &BackboneConfig::bn_momentum);
    t["backbone.bn_epsilon"] = nested_double(&RunConfig::backbone, &BackboneConfig::bn_epsilon);
    return t;
  }();
  return table;
}

const Field& field(const std::string& key) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return out;
}

BackboneConfig RunConfig::network() const {
  BackboneConfig base = backbone;
  base.width_mult = 1.0;
  base.depth_mult = 1.0;
  if (backbone.width_mult == 1.0 && backbone.depth_mult == 1.0) return base;
  return scale_config(base, backbone.width_mult, backbone.depth_mult);
}

DataFormat RunConfig::effective_format() const { return data_path == "synth" ? DataFormat::synthetic : format; }

std::size_t RunConfig::effective_test_ids() const {
  if (test_ids >= 0) return static_cast<std::size_t>(test_ids);
  return effective_format() == DataFormat::cuhk01 ? 486 : 0;
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  out << "# resolved run configuration\n";
  for (const auto& key : keys()) out << key << " = " << get(key) << "\n";
  return out.str();
}

void RunConfig::validate() const {
  auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const ContractViolation& e) {
      throw ConfigError(e.what());
    }
  };
  wrap([&] { train.validate(); });
  wrap([&] { augment.validate(); });
  wrap([&] { network().validate(); });
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (eval_trials < 1) throw ConfigError("eval.trials must be >= 1");
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    try {
      config.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(config, text.str(), file.string());
}

}  // namespace siamreid
