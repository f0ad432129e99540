#include "bsdeopt/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <utility>

#include "bsdeopt/csv.hpp"
#include "bsdeopt/errors.hpp"

namespace bsdeopt {
namespace {

[[noreturn]] void fail(const std::string& msg, int line = 0) {
  if (line > 0)
    throw ConfigError(msg + " (line " + std::to_string(line) + ")");
  throw ConfigError(msg);
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(const std::string& raw, const std::string& what, int line) {
  const std::string s = trim(raw);
  if (s.empty()) fail(what + ": empty number", line);
  std::size_t consumed = 0;
  double v = 0;
  try {
    v = std::stod(s, &consumed);
  } catch (const std::exception&) {
    fail(what + ": not a number '" + s + "'", line);
  }
  if (consumed != s.size()) fail(what + ": not a number '" + s + "'", line);
  return v;
}

long long parse_integer(const std::string& raw, const std::string& what,
                        long long min_value, int line) {
  const std::string s = trim(raw);
  std::size_t consumed = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &consumed);
  } catch (const std::exception&) {
    fail(what + ": not an integer '" + s + "'", line);
  }
  if (consumed != s.size()) fail(what + ": not an integer '" + s + "'", line);
  if (v < min_value)
    fail(what + ": must be >= " + std::to_string(min_value), line);
  return v;
}

std::uint64_t parse_seed(const std::string& raw, int line) {
  const std::string s = trim(raw);
  std::size_t consumed = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &consumed);
  } catch (const std::exception&) {
    fail("numerics.seed: not an unsigned integer '" + s + "'", line);
  }
  if (consumed != s.size() || s.front() == '-')
    fail("numerics.seed: not an unsigned integer '" + s + "'", line);
  return static_cast<std::uint64_t>(v);
}

Vec parse_vec(const std::string& raw, int expect_dim, const std::string& what,
              int line) {
  std::vector<std::string> parts = split(raw, ',');
  Vec v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = parse_double(parts[i], what, line);
  if (expect_dim >= 0 && v.size() != expect_dim)
    fail(what + ": expected " + std::to_string(expect_dim) +
             " components, got " + std::to_string(v.size()),
         line);
  return v;
}

// ---------------------------------------------------------------------------
// raw key/value layer

struct RawEntry {
  std::string value;
  int line = 0;
};

class KeyReader {
 public:
  explicit KeyReader(const std::string& text) {
    std::istringstream in(text);
    std::string raw_line;
    int number = 0;
    while (std::getline(in, raw_line)) {
      ++number;
      std::size_t hash = raw_line.find('#');
      if (hash != std::string::npos) raw_line.erase(hash);
      std::string stripped = trim(raw_line);
      if (stripped.empty()) continue;
      std::size_t eq = stripped.find('=');
      if (eq == std::string::npos)
        fail("expected 'key = value'", number);
      std::string key = trim(stripped.substr(0, eq));
      std::string value = trim(stripped.substr(eq + 1));
      if (key.empty()) fail("missing key before '='", number);
      auto [it, inserted] = raw_.emplace(key, RawEntry{value, number});
      if (!inserted)
        fail("duplicate key '" + key + "' (first on line " +
                 std::to_string(it->second.line) + ")",
             number);
    }
  }

  std::optional<RawEntry> take(const std::string& key) {
    auto it = raw_.find(key);
    if (it == raw_.end()) return std::nullopt;
    RawEntry e = it->second;
    raw_.erase(it);
    return e;
  }

  RawEntry require(const std::string& key) {
    auto e = take(key);
    if (!e) fail("missing required key '" + key + "'");
    return *e;
  }

  double number(const std::string& key, double fallback) {
    auto e = take(key);
    return e ? parse_double(e->value, key, e->line) : fallback;
  }

  int integer(const std::string& key, int fallback, int min_value) {
    auto e = take(key);
    if (!e) return fallback;
    long long v = parse_integer(e->value, key, min_value, e->line);
    if (v > std::numeric_limits<int>::max()) fail(key + ": too large", e->line);
    return static_cast<int>(v);
  }

  bool boolean(const std::string& key, bool fallback) {
    auto e = take(key);
    if (!e) return fallback;
    std::string v = trim(e->value);
    if (v == "true") return true;
    if (v == "false") return false;
    fail(key + ": expected true or false, got '" + v + "'", e->line);
  }

  std::string word(const std::string& key, const std::string& fallback) {
    auto e = take(key);
    return e ? trim(e->value) : fallback;
  }

  // All keys under `prefix`, sorted by suffix string; consumed.
  std::vector<std::pair<std::string, RawEntry>> take_prefix(
      const std::string& prefix) {
    std::vector<std::pair<std::string, RawEntry>> out;
    for (auto it = raw_.lower_bound(prefix); it != raw_.end();) {
      if (it->first.compare(0, prefix.size(), prefix) != 0) break;
      out.emplace_back(it->first.substr(prefix.size()), it->second);
      it = raw_.erase(it);
    }
    return out;
  }

  void finish() const {
    if (raw_.empty()) return;
    auto worst = raw_.begin();
    for (auto it = raw_.begin(); it != raw_.end(); ++it)
      if (it->second.line < worst->second.line) worst = it;
    fail("unknown key '" + worst->first + "'", worst->second.line);
  }

 private:
  std::map<std::string, RawEntry> raw_;
};

// ---------------------------------------------------------------------------
// geometry grammar

Geometry parse_member(const std::string& raw, int dim, const std::string& key,
                      int line) {
  std::string s = trim(raw);
  std::string word = s;
  std::string rest;
  std::size_t space = s.find_first_of(" \t");
  if (space != std::string::npos) {
    word = s.substr(0, space);
    rest = trim(s.substr(space + 1));
  }
  auto fields = [&](std::size_t min_count, std::size_t max_count) {
    std::vector<std::string> out;
    if (!rest.empty())
      for (const std::string& f : split(rest, ';')) out.push_back(trim(f));
    if (out.size() < min_count || out.size() > max_count)
      fail(key + ": geometry '" + word + "' takes " +
               std::to_string(min_count) +
               (max_count == min_count
                    ? ""
                    : (max_count == std::numeric_limits<std::size_t>::max()
                           ? "+"
                           : ".." + std::to_string(max_count))) +
               " ';'-separated fields",
           line);
    return out;
  };
  constexpr std::size_t many = std::numeric_limits<std::size_t>::max();

  if (word == "full") {
    fields(0, 0);
    return Geometry{FullSpace{}};
  }
  if (word == "box") {
    auto f = fields(2, 2);
    Box b;
    b.lower = parse_vec(f[0], dim, key, line);
    b.upper = parse_vec(f[1], dim, key, line);
    return Geometry{b};
  }
  if (word == "ball") {
    auto f = fields(2, 2);
    Ball b;
    b.center = parse_vec(f[0], dim, key, line);
    b.radius = parse_double(f[1], key, line);
    return Geometry{b};
  }
  if (word == "halfspace") {
    auto f = fields(2, 2);
    HalfSpace h;
    h.normal = parse_vec(f[0], dim, key, line);
    h.offset = parse_double(f[1], key, line);
    return Geometry{h};
  }
  if (word == "polytope") {
    auto f = fields(1, many);
    Polytope p;
    for (const std::string& v : f) p.vertices.push_back(parse_vec(v, dim, key, line));
    return Geometry{p};
  }
  if (word == "points") {
    auto f = fields(1, many);
    FinitePointSet p;
    for (const std::string& v : f) p.points.push_back(parse_vec(v, dim, key, line));
    return Geometry{p};
  }
  fail(key + ": unknown geometry '" + word + "'", line);
}

Geometry parse_geometry(const std::string& raw, int dim, const std::string& key,
                        int line) {
  std::vector<std::string> members = split(raw, '|');
  if (members.size() == 1) return parse_member(members[0], dim, key, line);
  UnionOfConvex u;
  for (const std::string& m : members)
    u.members.push_back(parse_member(m, dim, key, line));
  return Geometry{u};
}

ConstraintSet parse_set(KeyReader& reader, const std::string& prefix, int dim) {
  std::string set_key = prefix + ".set";
  auto base = reader.take(set_key);
  Geometry g = base ? parse_geometry(base->value, dim, set_key, base->line)
                    : Geometry{FullSpace{}};
  int base_line = base ? base->line : 0;

  ConstraintSet set;
  try {
    set = ConstraintSet(dim, g);
  } catch (const Error& e) {
    fail(set_key + ": " + e.what(), base_line);
  }

  std::vector<std::pair<long long, RawEntry>> entries;
  for (auto& [suffix, entry] : reader.take_prefix(prefix + ".schedule.")) {
    std::string key = prefix + ".schedule." + suffix;
    entries.emplace_back(parse_integer(suffix, key, 0, entry.line), entry);
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::string key = prefix + ".schedule." + std::to_string(entries[i].first);
    const RawEntry& entry = entries[i].second;
    if (entries[i].first != static_cast<long long>(i))
      fail(prefix + ".schedule: indices must be 0,1,2,... without gaps",
           entry.line);
    std::size_t colon = entry.value.find(':');
    if (colon == std::string::npos)
      fail(key + ": expected 'TIME : GEOMETRY'", entry.line);
    double t = parse_double(entry.value.substr(0, colon), key, entry.line);
    Geometry sg =
        parse_geometry(entry.value.substr(colon + 1), dim, key, entry.line);
    try {
      set.add_schedule_entry(t, sg);
    } catch (const Error& e) {
      fail(key + ": " + e.what(), entry.line);
    }
  }
  return set;
}

void validate_perturbation(const std::string& token, int line) {
  std::size_t colon = token.find(':');
  std::string head = colon == std::string::npos ? token : token.substr(0, colon);
  std::string arg = colon == std::string::npos ? "" : token.substr(colon + 1);
  const std::string key = "verify.perturbations";
  if (head == "p_scale" || head == "c_scale" || head == "c_shift") {
    (void)parse_double(arg, key, line);
    return;
  }
  if (head == "p_const") {
    for (const std::string& part : split(arg, ';'))
      (void)parse_double(part, key, line);
    return;
  }
  fail(key + ": unknown perturbation '" + token +
           "' (expected p_scale:X, c_scale:X, c_shift:X or p_const:V)",
       line);
}

// ---------------------------------------------------------------------------
// serialization helpers

std::string vec_text(const Vec& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v[i]);
  }
  return out;
}

std::string member_text(const Geometry& g) {
  struct Visitor {
    std::string operator()(const FullSpace&) const { return "full"; }
    std::string operator()(const Box& b) const {
      return "box " + vec_text(b.lower) + " ; " + vec_text(b.upper);
    }
    std::string operator()(const Ball& b) const {
      return "ball " + vec_text(b.center) + " ; " + format_double(b.radius);
    }
    std::string operator()(const HalfSpace& h) const {
      return "halfspace " + vec_text(h.normal) + " ; " +
             format_double(h.offset);
    }
    std::string operator()(const Polytope& p) const {
      std::string out = "polytope ";
      for (std::size_t i = 0; i < p.vertices.size(); ++i) {
        if (i) out += " ; ";
        out += vec_text(p.vertices[i]);
      }
      return out;
    }
    std::string operator()(const FinitePointSet& p) const {
      std::string out = "points ";
      for (std::size_t i = 0; i < p.points.size(); ++i) {
        if (i) out += " ; ";
        out += vec_text(p.points[i]);
      }
      return out;
    }
    std::string operator()(const UnionOfConvex&) const {
      throw PreconditionViolated("nested union geometry cannot be serialized");
    }
  };
  return std::visit(Visitor{}, g.shape);
}

std::string geometry_text(const Geometry& g) {
  if (const auto* u = std::get_if<UnionOfConvex>(&g.shape)) {
    std::string out;
    for (std::size_t i = 0; i < u->members.size(); ++i) {
      if (i) out += " | ";
      out += member_text(u->members[i]);
    }
    return out;
  }
  return member_text(g);
}

double constant_of(const ScalarCoefficient& c, int n, const char* what) {
  if (!c.is_constant())
    throw PreconditionViolated(std::string(what) +
                               ": scenarios support constant coefficients only");
  return c(0.0, Vec::Zero(n));
}

const char* family_name(UtilityFamily f) {
  switch (f) {
    case UtilityFamily::Exponential: return "exponential";
    case UtilityFamily::Log: return "log";
    default: return "power";
  }
}

}  // namespace

const char* solve_mode_name(SolveMode mode) {
  return mode == SolveMode::Ode ? "ode" : "lsmc";
}

Scenario parse_scenario(const std::string& text) {
  KeyReader reader(text);
  Scenario s;

  RawEntry fam = reader.require("utility.family");
  std::string fam_word = trim(fam.value);
  if (fam_word == "exponential")
    s.problem.family = UtilityFamily::Exponential;
  else if (fam_word == "log")
    s.problem.family = UtilityFamily::Log;
  else if (fam_word == "power")
    s.problem.family = UtilityFamily::Power;
  else
    fail("utility.family: expected exponential, log or power, got '" +
             fam_word + "'",
         fam.line);

  s.problem.gamma = reader.number("utility.gamma", 1.0);
  s.problem.alpha = reader.number("utility.alpha", 1.0);
  s.problem.beta = reader.number("utility.beta", 0.0);
  s.problem.x = reader.number("utility.x", 1.0);
  s.problem.terminal_endowment = reader.number("utility.endowment", 0.0);

  s.market.n = reader.integer("market.n", 1, 1);
  s.market.m = reader.integer("market.m", 1, 1);
  s.market.T = reader.number("market.T", 1.0);
  s.market.r = reader.number("market.r", 0.0);

  RawEntry mu = reader.require("market.mu");
  s.market.mu = VecCoefficient(parse_vec(mu.value, s.market.m, "market.mu", mu.line));
  RawEntry sig = reader.require("market.sigma");
  Vec flat = parse_vec(sig.value, s.market.m * s.market.n, "market.sigma", sig.line);
  Mat sigma(s.market.m, s.market.n);
  for (int i = 0; i < s.market.m; ++i)
    for (int j = 0; j < s.market.n; ++j) sigma(i, j) = flat[i * s.market.n + j];
  s.market.sigma = MatCoefficient(sigma);

  s.market.income = ScalarCoefficient(reader.number("market.income", 0.0));
  bool default_relative = s.problem.family != UtilityFamily::Exponential;
  s.market.income_is_relative =
      reader.boolean("market.income_relative", default_relative);
  s.market.endowment = s.problem.terminal_endowment;

  s.problem.investment_set = parse_set(reader, "constraints.investment", s.market.n);
  s.problem.consumption_set = parse_set(reader, "constraints.consumption", 1);

  s.numerics.steps = reader.integer("numerics.steps", 256, 1);
  s.numerics.paths = reader.integer("numerics.paths", 100000, 2);
  auto seed = reader.take("numerics.seed");
  s.numerics.seed = seed ? parse_seed(seed->value, seed->line) : 12345;
  s.numerics.basis_degree = reader.integer("numerics.basis_degree", 3, 0);
  s.numerics.ode_tol = reader.number("numerics.ode_tol", 1e-6);
  s.numerics.band = reader.number("numerics.band", 3.0);
  s.numerics.violation_band = reader.number("numerics.violation_band", 4.0);
  std::string mode_word = reader.word("numerics.mode", "auto");
  auto zcap = reader.take("numerics.z_cap");

  if (auto pert = reader.take("verify.perturbations")) {
    for (const std::string& part : split(pert->value, ',')) {
      std::string token = trim(part);
      if (token.empty()) continue;
      validate_perturbation(token, pert->line);
      s.perturbations.push_back(token);
    }
  }
  s.output_dir = reader.word("output.dir", "out");

  reader.finish();

  if (!(s.market.T > 0)) fail("market.T: must be positive");
  if (!(s.numerics.ode_tol > 0)) fail("numerics.ode_tol: must be positive");
  if (!(s.numerics.band > 0)) fail("numerics.band: must be positive");
  if (!(s.numerics.violation_band > 0))
    fail("numerics.violation_band: must be positive");
  if (s.numerics.basis_degree > 10) fail("numerics.basis_degree: must be <= 10");

  try {
    s.market.validate();
    s.problem.validate(s.market);
  } catch (const Error& e) {
    fail(std::string("invalid scenario: ") + e.what());
  }

  if (!zcap || trim(zcap->value) == "auto") {
    s.numerics.z_cap = 10.0 * (s.market.theta_bound + 1.0);
  } else {
    s.numerics.z_cap = parse_double(zcap->value, "numerics.z_cap", zcap->line);
    if (!(s.numerics.z_cap > 0)) fail("numerics.z_cap: must be positive", zcap->line);
  }

  if (mode_word == "auto") {
    s.numerics.mode =
        s.market.deterministic() ? SolveMode::Ode : SolveMode::Lsmc;
  } else if (mode_word == "ode") {
    if (!s.market.deterministic())
      fail("numerics.mode: ode requires deterministic market coefficients");
    s.numerics.mode = SolveMode::Ode;
  } else if (mode_word == "lsmc") {
    s.numerics.mode = SolveMode::Lsmc;
  } else {
    fail("numerics.mode: expected auto, ode or lsmc, got '" + mode_word + "'");
  }

  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string serialize_scenario(const Scenario& s) {
  const MarketModel& m = s.market;
  const UtilityProblem& p = s.problem;
  if (!m.constant_coefficients())
    throw PreconditionViolated(
        "scenario serialization supports constant coefficients only");

  std::string out = "# scenario manifest\n";
  auto emit = [&out](const std::string& key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  };
  auto emit_set = [&](const std::string& prefix, const ConstraintSet& set) {
    emit(prefix + ".set", geometry_text(set.base()));
    const auto& sched = set.schedule();
    for (std::size_t i = 0; i < sched.size(); ++i)
      emit(prefix + ".schedule." + std::to_string(i),
           format_double(sched[i].first) + " : " +
               geometry_text(sched[i].second));
  };

  emit("utility.family", family_name(p.family));
  emit("utility.gamma", format_double(p.gamma));
  emit("utility.alpha", format_double(p.alpha));
  emit("utility.beta", format_double(p.beta));
  emit("utility.x", format_double(p.x));
  emit("utility.endowment", format_double(p.terminal_endowment));

  emit("market.n", std::to_string(m.n));
  emit("market.m", std::to_string(m.m));
  emit("market.T", format_double(m.T));
  emit("market.r", format_double(m.r));
  Vec zero = Vec::Zero(m.n);
  emit("market.mu", vec_text(m.mu(0.0, zero)));
  Mat sigma = m.sigma(0.0, zero);
  Vec flat(m.m * m.n);
  for (int i = 0; i < m.m; ++i)
    for (int j = 0; j < m.n; ++j) flat[i * m.n + j] = sigma(i, j);
  emit("market.sigma", vec_text(flat));
  emit("market.income", format_double(constant_of(m.income, m.n, "market.income")));
  emit("market.income_relative", m.income_is_relative ? "true" : "false");

  emit_set("constraints.investment", p.investment_set);
  emit_set("constraints.consumption", p.consumption_set);

  emit("numerics.steps", std::to_string(s.numerics.steps));
  emit("numerics.paths", std::to_string(s.numerics.paths));
  emit("numerics.seed", std::to_string(s.numerics.seed));
  emit("numerics.mode", solve_mode_name(s.numerics.mode));
  emit("numerics.basis_degree", std::to_string(s.numerics.basis_degree));
  emit("numerics.z_cap", format_double(s.numerics.z_cap));
  emit("numerics.ode_tol", format_double(s.numerics.ode_tol));
  emit("numerics.band", format_double(s.numerics.band));
  emit("numerics.violation_band", format_double(s.numerics.violation_band));

  std::string pert;
  for (std::size_t i = 0; i < s.perturbations.size(); ++i) {
    if (i) pert += ", ";
    pert += s.perturbations[i];
  }
  emit("verify.perturbations", pert);
  emit("output.dir", s.output_dir);
  return out;
}

Scenario apply_override(const Scenario& s, const std::string& key,
                        const std::string& value) {
  std::string text = serialize_scenario(s);
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  bool replaced = false;
  while (std::getline(in, line)) {
    std::string stripped = trim(line);
    std::size_t eq = stripped.find('=');
    if (!replaced && eq != std::string::npos &&
        trim(stripped.substr(0, eq)) == key) {
      out << key << " = " << value << "\n";
      replaced = true;
    } else {
      out << line << "\n";
    }
  }
  if (!replaced) out << key << " = " << value << "\n";
  return parse_scenario(out.str());
}

}  // namespace bsdeopt
