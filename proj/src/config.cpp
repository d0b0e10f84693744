#include "cellseg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace cellseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ParameterError("config: " + key + " expects a number, got '" + v + "'");
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ParameterError("config: " + key + " expects an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParameterError("config: " + key + " expects a boolean, got '" + v + "'");
}

Spacing to_spacing(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  std::string a, b, c, extra;
  if (!(in >> a >> b >> c) || (in >> extra)) {
    throw ParameterError("config: " + key + " expects three numbers 'z y x'");
  }
  return {to_double(key, a), to_double(key, b), to_double(key, c)};
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"ball_radius",
       [](auto& c, auto& k, auto& v) { c.preprocess.ball_radius = to_double(k, v); }},
      {"subtract_background",
       [](auto& c, auto& k, auto& v) { c.preprocess.subtract_background = to_bool(k, v); }},
      {"target_spacing",
       [](auto& c, auto& k, auto& v) {
         if (v.empty() || v == "none") c.preprocess.target_spacing.reset();
         else c.preprocess.target_spacing = to_spacing(k, v);
       }},
      {"reference_cdf",
       [](auto& c, auto&, auto& v) {
         if (v.empty() || v == "none") c.reference_cdf_path.reset();
         else c.reference_cdf_path = v;
       }},
      {"fallback_sigma", [](auto& c, auto& k, auto& v) { c.fallback_sigma = to_double(k, v); }},
      {"h_value", [](auto& c, auto& k, auto& v) { c.h_value = to_double(k, v); }},
      {"skip_crf", [](auto& c, auto& k, auto& v) { c.skip_crf = to_bool(k, v); }},
      {"threads", [](auto& c, auto& k, auto& v) { c.threads = to_int(k, v); }},
      {"tol", [](auto& c, auto& k, auto& v) { c.tolerance = to_int(k, v); }},
      {"crf.w1", [](auto& c, auto& k, auto& v) { c.crf.w1 = to_double(k, v); }},
      {"crf.w2", [](auto& c, auto& k, auto& v) { c.crf.w2 = to_double(k, v); }},
      {"crf.sigma_alpha", [](auto& c, auto& k, auto& v) { c.crf.sigma_alpha = to_double(k, v); }},
      {"crf.sigma_beta", [](auto& c, auto& k, auto& v) { c.crf.sigma_beta = to_double(k, v); }},
      {"crf.sigma_gamma", [](auto& c, auto& k, auto& v) { c.crf.sigma_gamma = to_double(k, v); }},
      {"crf.iterations", [](auto& c, auto& k, auto& v) { c.crf.iterations = to_int(k, v); }},
      {"crf.epsilon_floor",
       [](auto& c, auto& k, auto& v) { c.crf.epsilon_floor = to_double(k, v); }},
      {"crf.candidate_radius",
       [](auto& c, auto& k, auto& v) { c.crf.candidate_radius = to_double(k, v); }},
      {"crf.range_step", [](auto& c, auto& k, auto& v) { c.crf.range_step = to_double(k, v); }},
  };
  return table;
}

}  // namespace

ConfigMap parse_config(const std::string& text) {
  ConfigMap out;
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
      throw ParameterError("config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ParameterError("config line " + std::to_string(number) + ": empty key");
    }
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot read config file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void PipelineConfig::validate() const {
  preprocess.validate();
  if (!(fallback_sigma >= 0.0)) throw ParameterError("fallback_sigma must be >= 0");
  if (!(h_value > 0.0)) throw ParameterError("h_value must be > 0");
  if (threads < 0) throw ParameterError("threads must be >= 0");
  if (tolerance < 0) throw ParameterError("tol must be >= 0");
  if (!probmap_path && !fallback) {
    throw ParameterError("no probability-map source: give --probmap FILE or --fallback");
  }
  // Label-count dependent bounds are checked again at refinement time.
  crf.validate(1);
}

void apply_config(PipelineConfig& cfg, const ConfigMap& values) {
  const auto& table = setters();
  for (const auto& [key, value] : values) {
    if (key == "probmap" || key == "fallback") continue;
    const auto it = table.find(key);
    if (it == table.end()) throw ParameterError("config: unknown key '" + key + "'");
    it->second(cfg, key, value);
  }
  const auto fb = values.find("fallback");
  const auto pm = values.find("probmap");
  if (fb != values.end()) {
    cfg.fallback = to_bool("fallback", fb->second);
    if (cfg.fallback) cfg.probmap_path.reset();
  }
  if (pm != values.end()) {
    if (pm->second.empty() || pm->second == "none") cfg.probmap_path.reset();
    else cfg.probmap_path = pm->second;
  }
}

PipelineConfig resolve_config(const ConfigMap& file, const ConfigMap& overrides) {
  PipelineConfig cfg;
  apply_config(cfg, file);
  apply_config(cfg, overrides);
  return cfg;
}

std::string format_config(const PipelineConfig& c) {
  std::ostringstream out;
  out.precision(17);
  const auto& p = c.preprocess;
  out << "ball_radius = " << p.ball_radius << "\n"
      << "subtract_background = " << (p.subtract_background ? "true" : "false") << "\n";
  if (p.target_spacing) {
    out << "target_spacing = " << p.target_spacing->z << " " << p.target_spacing->y << " "
        << p.target_spacing->x << "\n";
  }
  if (c.reference_cdf_path) out << "reference_cdf = " << c.reference_cdf_path->string() << "\n";
  out << "fallback_sigma = " << c.fallback_sigma << "\n";
  if (c.probmap_path) out << "probmap = " << c.probmap_path->string() << "\n";
  out << "fallback = " << (c.fallback ? "true" : "false") << "\n"
      << "h_value = " << c.h_value << "\n"
      << "skip_crf = " << (c.skip_crf ? "true" : "false") << "\n"
      << "threads = " << c.threads << "\n"
      << "tol = " << c.tolerance << "\n"
      << "crf.w1 = " << c.crf.w1 << "\n"
      << "crf.w2 = " << c.crf.w2 << "\n"
      << "crf.sigma_alpha = " << c.crf.sigma_alpha << "\n"
      << "crf.sigma_beta = " << c.crf.sigma_beta << "\n"
      << "crf.sigma_gamma = " << c.crf.sigma_gamma << "\n"
      << "crf.iterations = " << c.crf.iterations << "\n"
      << "crf.epsilon_floor = " << c.crf.epsilon_floor << "\n"
      << "crf.candidate_radius = " << c.crf.candidate_radius << "\n"
      << "crf.range_step = " << c.crf.range_step << "\n";
  return out.str();
}

}  // namespace cellseg
