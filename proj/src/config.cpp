#include "mspat/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace mspat::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const Ini::Entry& e) {
  try {
    size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used != e.value.size()) throw std::invalid_argument(e.value);
    return v;
  } catch (const std::exception&) {
    throw parse_error("bad number '" + e.value + "' for key '" + e.key + "'", e.line);
  }
}

double number_of(const Ini::Section& s, const std::string& key, double fallback) {
  for (const auto& e : s.entries)
    if (e.key == key) return parse_number(e);
  return fallback;
}

std::optional<double> maybe_number_of(const Ini::Section& s, const std::string& key) {
  for (const auto& e : s.entries)
    if (e.key == key) return parse_number(e);
  return std::nullopt;
}

}  // namespace

const std::string* Ini::Section::find(const std::string& key) const {
  for (const auto& e : entries)
    if (e.key == key) return &e.value;
  return nullptr;
}

std::string Ini::Section::require(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) throw parse_error("missing key '" + key + "' in section [" + name + "]", line);
  return *v;
}

const Ini::Section* Ini::find(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

Ini parse_ini(std::istream& in) {
  Ini ini;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    const auto hash = t.find('#');
    if (hash != std::string::npos) t = trim(t.substr(0, hash));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw parse_error("unterminated section header", line_no);
      const std::string name = trim(t.substr(1, t.size() - 2));
      if (name.empty()) throw parse_error("empty section name", line_no);
      ini.sections.push_back({name, line_no, {}});
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw parse_error("expected 'key = value' or '[section]'", line_no);
    if (ini.sections.empty())
      throw parse_error("key/value pair before any section", line_no);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw parse_error("empty key", line_no);
    ini.sections.back().entries.push_back({key, value, line_no});
  }
  return ini;
}

Ini parse_ini_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  return parse_ini(in);
}

const EffectConfig* ModelConfig::find_effect(const std::string& name) const {
  for (const auto& e : effects)
    if (e.name == name) return &e;
  return nullptr;
}

ModelConfig load(const std::string& path) {
  const Ini ini = parse_ini_file(path);
  ModelConfig cfg;
  const auto slash = path.find_last_of('/');
  cfg.base_dir = slash == std::string::npos ? "." : path.substr(0, slash);

  const Ini::Section* data = ini.find("data");
  if (!data) throw parse_error("config needs a [data] section");
  const std::string kind = data->require("kind");
  if (kind == "areal")
    cfg.kind = DataKind::areal;
  else if (kind == "geostat")
    cfg.kind = DataKind::geostat;
  else if (kind == "lgcp")
    cfg.kind = DataKind::lgcp;
  else
    throw parse_error("unknown data kind '" + kind + "'", data->line);

  auto opt = [&](const Ini::Section* s, const char* key) {
    const std::string* v = s ? s->find(key) : nullptr;
    return v ? *v : std::string();
  };
  cfg.observations = opt(data, "observations");
  cfg.expected = opt(data, "expected");
  cfg.graph = opt(data, "graph");
  cfg.boundary = opt(data, "boundary");
  cfg.points = opt(data, "points");

  switch (cfg.kind) {
    case DataKind::areal:
      if (cfg.observations.empty() || cfg.expected.empty() || cfg.graph.empty())
        throw parse_error("areal data needs observations, expected and graph paths",
                          data->line);
      break;
    case DataKind::geostat:
      if (cfg.observations.empty() || cfg.boundary.empty())
        throw parse_error("geostat data needs observations and boundary paths",
                          data->line);
      break;
    case DataKind::lgcp:
      if (cfg.boundary.empty())
        throw parse_error("lgcp data needs a boundary path", data->line);
      break;
  }

  for (const auto& s : ini.sections) {
    if (s.name.rfind("family.", 0) == 0) {
      const int idx = std::atoi(s.name.c_str() + 7);
      if (idx != static_cast<int>(cfg.families.size()) + 1)
        throw parse_error("family sections must be numbered consecutively from 1",
                          s.line);
      FamilyConfig f;
      const std::string fk = s.require("kind");
      if (fk == "poisson") {
        f.poisson = true;
      } else if (fk == "gaussian") {
        f.poisson = false;
        if (const std::string* p = s.find("precision")) {
          f.fixed_precision = true;
          f.precision = number_of(s, "precision", 1.0);
          if (f.precision <= 0) throw parse_error("precision must be positive", s.line);
          (void)p;
        } else {
          f.sigma0 = number_of(s, "sigma0", 1.0);
          f.p_sigma = number_of(s, "p_sigma", 0.05);
          if (f.sigma0 <= 0 || f.p_sigma <= 0 || f.p_sigma >= 1)
            throw parse_error("bad gaussian prior parameters", s.line);
        }
      } else {
        throw parse_error("unknown family kind '" + fk + "'", s.line);
      }
      cfg.families.push_back(f);
    } else if (s.name.rfind("effect.", 0) == 0) {
      EffectConfig e;
      e.name = s.name.substr(7);
      if (e.name.empty()) throw parse_error("empty effect name", s.line);
      if (cfg.find_effect(e.name))
        throw parse_error("duplicate effect '" + e.name + "'", s.line);
      e.kind = s.require("kind");
      static const char* kinds[] = {"intercept", "covariate", "besag",
                                    "iid",       "spde",      "copy"};
      if (std::find_if(std::begin(kinds), std::end(kinds), [&](const char* k) {
            return e.kind == k;
          }) == std::end(kinds))
        throw parse_error("unknown effect kind '" + e.kind + "'", s.line);
      e.column = static_cast<int>(number_of(s, "column", 0));
      if (const std::string* t = s.find("target")) e.target = *t;
      if (const std::string* c = s.find("covariate")) e.covariate = *c;
      e.r0 = number_of(s, "r0", 1.0);
      e.p_r = number_of(s, "p_r", 0.5);
      e.pc_sigma0 = number_of(s, "sigma0", 1.0);
      e.pc_p_sigma = number_of(s, "p_sigma", 0.5);
      e.value = maybe_number_of(s, "value");
      e.tau = maybe_number_of(s, "tau");
      e.range = maybe_number_of(s, "range");
      e.sigma = maybe_number_of(s, "sigma");
      if (e.kind == "copy" && e.target.empty())
        throw parse_error("copy effect '" + e.name + "' needs a target", s.line);
      if (e.kind == "covariate" && e.covariate.empty())
        throw parse_error("covariate effect '" + e.name + "' needs a covariate column",
                          s.line);
      cfg.effects.push_back(std::move(e));
    }
  }

  if (cfg.families.empty()) throw parse_error("config declares no families");
  if (cfg.effects.empty()) throw parse_error("config declares no effects");

  const int K = static_cast<int>(cfg.families.size());
  for (const auto& e : cfg.effects) {
    if (e.column < 0 || e.column > K)
      throw parse_error("effect '" + e.name + "' routes to response column " +
                        std::to_string(e.column) + ", but there are " +
                        std::to_string(K) + " families");
    if (e.kind == "copy") {
      const EffectConfig* t = cfg.find_effect(e.target);
      if (!t)
        throw parse_error("copy effect '" + e.name + "' targets unknown effect '" +
                          e.target + "'");
      if (t->kind == "copy")
        throw parse_error("copy effect '" + e.name + "' targets another copy");
    }
  }

  if (const Ini::Section* m = ini.find("mesh")) {
    cfg.mesh.max_edge_inner = number_of(*m, "max_edge_inner", 0.0);
    cfg.mesh.max_edge_outer = number_of(*m, "max_edge_outer", cfg.mesh.max_edge_inner);
    cfg.mesh.cutoff = number_of(*m, "cutoff", 0.0);
    cfg.mesh.offset = number_of(*m, "offset", 0.0);
  }
  if (const Ini::Section* f = ini.find("fit")) {
    cfg.fit.seed = static_cast<std::uint64_t>(number_of(*f, "seed", 20240101.0));
    cfg.fit.threads = static_cast<int>(number_of(*f, "threads", 0.0));
  }
  if (const Ini::Section* o = ini.find("output")) {
    if (const std::string* d = o->find("dir")) cfg.output_dir = *d;
  }
  return cfg;
}

std::string resolve(const ModelConfig& cfg, const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  return cfg.base_dir + "/" + path;
}

}  // namespace mspat::config
