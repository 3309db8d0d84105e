#include "efbg/hyperband.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "efbg/error.hpp"
#include "efbg/json_util.hpp"
#include "efbg/log.hpp"

namespace efbg {

using nlohmann::json;

namespace {

bool integral(double v) { return std::abs(v - std::round(v)) < 1e-9; }

// Grid values are rounded to 12 significant decimals so 0.1 + 2 * 0.1 prints as 0.3.
double tidy(double v) { return std::round(v * 1e12) / 1e12; }

}  // namespace

std::vector<json> Dimension::values() const {
  if (categorical()) return choices;
  const auto count = static_cast<std::size_t>(std::floor((max - min) / step + 1e-9)) + 1;
  const bool ints = integral(min) && integral(max) && integral(step);
  std::vector<json> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double v = tidy(min + static_cast<double>(i) * step);
    if (ints) {
      out.emplace_back(static_cast<long long>(std::llround(v)));
    } else {
      out.emplace_back(v);
    }
  }
  return out;
}

void SearchSpace::validate() const {
  if (dimensions.empty()) throw ConfigError("search space '" + name + "' has no dimensions");
  std::map<std::string, int> seen;
  for (const auto& d : dimensions) {
    if (d.name.empty()) throw ConfigError("search space '" + name + "': unnamed dimension");
    if (seen[d.name]++) throw ConfigError("search space '" + name + "': duplicate dimension '" + d.name + "'");
    if (d.categorical()) continue;
    if (!(d.step > 0.0) || !(d.max >= d.min) || !std::isfinite(d.min) || !std::isfinite(d.max)) {
      throw ConfigError("search space '" + name + "': dimension '" + d.name +
                        "' needs min <= max and a positive step");
    }
  }
}

SearchSpace SearchSpace::from_json(const json& j) {
  constexpr std::string_view ctx = "search space";
  reject_unknown_keys(j, {"name", "dimensions"}, ctx);
  SearchSpace s;
  read_opt(j, "name", s.name, ctx);
  auto dims = j.find("dimensions");
  if (dims == j.end() || !dims->is_array()) throw SchemaError("search space: 'dimensions' must be an array");
  for (const auto& d : *dims) {
    reject_unknown_keys(d, {"name", "choices", "min", "max", "step", "repeat"}, "search space dimension");
    Dimension dim;
    read_opt(d, "name", dim.name, "dimension");
    std::size_t repeat = 0;
    read_opt(d, "repeat", repeat, "dimension");
    if (d.contains("choices")) {
      if (d.contains("min") || d.contains("max") || d.contains("step")) {
        throw SchemaError("dimension '" + dim.name + "' mixes choices with a range");
      }
      if (!d["choices"].is_array() || d["choices"].empty()) {
        throw ConfigError("dimension '" + dim.name + "' has an empty choice list");
      }
      for (const auto& c : d["choices"]) dim.choices.push_back(c);
    } else {
      if (!d.contains("min") || !d.contains("max") || !d.contains("step")) {
        throw SchemaError("dimension '" + dim.name + "' needs either choices or min/max/step");
      }
      read_opt(d, "min", dim.min, "dimension");
      read_opt(d, "max", dim.max, "dimension");
      read_opt(d, "step", dim.step, "dimension");
    }
    if (repeat == 0) {
      s.dimensions.push_back(std::move(dim));
    } else {
      for (std::size_t k = 1; k <= repeat; ++k) {
        Dimension copy = dim;
        copy.name = dim.name + "_" + std::to_string(k);
        s.dimensions.push_back(std::move(copy));
      }
    }
  }
  s.validate();
  return s;
}

json SearchSpace::to_json() const {
  json dims = json::array();
  for (const auto& d : dimensions) {
    if (d.categorical()) {
      dims.push_back({{"name", d.name}, {"choices", d.choices}});
    } else {
      dims.push_back({{"name", d.name}, {"min", d.min}, {"max", d.max}, {"step", d.step}});
    }
  }
  return {{"name", name}, {"dimensions", dims}};
}

json sample_config(const SearchSpace& space, Rng& rng) {
  json out = json::object();
  for (const auto& d : space.dimensions) {
    const auto vals = d.values();
    if (vals.empty()) throw ConfigError("dimension '" + d.name + "' is empty");
    out[d.name] = vals[rng.below(vals.size())];
  }
  return out;
}

BracketPlan plan_brackets(std::size_t max_epochs, std::size_t eta) {
  if (eta < 2) throw ConfigError("hyperband eta must be >= 2");
  if (max_epochs < eta) throw ConfigError("hyperband max_epochs (R) must be >= eta");
  BracketPlan plan;
  plan.max_epochs = max_epochs;
  plan.eta = eta;
  // Integer floor(log_eta R), immune to floating-point log error.
  std::size_t s_max = 0;
  for (std::size_t p = eta; p <= max_epochs; p *= eta) ++s_max;
  plan.s_max = s_max;

  auto ipow = [](std::size_t b, std::size_t e) {
    std::size_t r = 1;
    while (e--) r *= b;
    return r;
  };
  for (std::size_t s = s_max + 1; s-- > 0;) {
    Bracket b;
    b.s = s;
    const std::size_t eta_s = ipow(eta, s);
    std::size_t n = ((s_max + 1) * eta_s + s) / (s + 1);  // ceil
    for (std::size_t i = 0; i <= s; ++i) {
      // r_i = R eta^(i - s), floored, at least one epoch, exactly R in the last round.
      std::size_t r = i == s ? max_epochs : std::max<std::size_t>(1, max_epochs * ipow(eta, i) / eta_s);
      b.rounds.push_back({n, r});
      n /= eta;
    }
    plan.brackets.push_back(std::move(b));
  }
  return plan;
}

const char* to_string(TrialStatus s) { return s == TrialStatus::Ok ? "ok" : "failed"; }

std::vector<json> read_ledger(std::istream& in) {
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError("trial ledger line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

namespace {

// Failed trials last; then objective; ties broken by the trial seed so equal
// objectives give a seed-dependent but reproducible order.
bool better(const TrialResult& a, const TrialResult& b) {
  if (a.status != b.status) return a.status == TrialStatus::Ok;
  if (a.objective != b.objective) return a.objective < b.objective;
  if (a.trial.seed != b.trial.seed) return a.trial.seed < b.trial.seed;
  return a.trial.id < b.trial.id;
}

json record(const TrialResult& r, std::size_t round) {
  json j = {{"trial", r.trial.id},
            {"bracket", r.trial.bracket},
            {"round", round},
            {"seed", r.trial.seed},
            {"epochs", r.epochs_trained},
            {"epochs_used", r.epochs_used},
            {"status", to_string(r.status)},
            {"config", r.trial.config}};
  j["objective"] = std::isfinite(r.objective) ? json(r.objective) : json(nullptr);
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

}  // namespace

HyperbandResult run_hyperband(const SearchSpace& space, TrialRunner& runner, const HyperbandOptions& options) {
  space.validate();
  HyperbandResult result;
  result.plan = plan_brackets(options.max_epochs, options.eta);

  std::map<std::pair<std::size_t, std::size_t>, const json*> replay;
  for (const auto& r : options.replay) {
    if (r.contains("trial") && r.contains("epochs")) {
      replay[{r["trial"].get<std::size_t>(), r["epochs"].get<std::size_t>()}] = &r;
    }
  }

  Rng sampler(derive_seed(options.seed, 0x68797065ULL));
  std::size_t next_id = 0;
  std::vector<TrialResult> finals;

  for (const auto& bracket : result.plan.brackets) {
    std::vector<TrialResult> live;
    for (std::size_t k = 0; k < bracket.rounds.front().configs; ++k) {
      TrialResult t;
      t.trial.id = next_id;
      t.trial.bracket = bracket.s;
      t.trial.seed = derive_seed(options.seed, 0x10000ULL + next_id);
      t.trial.config = sample_config(space, sampler);
      ++next_id;
      live.push_back(std::move(t));
    }

    std::size_t used = 0;
    std::vector<std::vector<std::size_t>> entering;
    for (std::size_t i = 0; i < bracket.rounds.size(); ++i) {
      const Round& round = bracket.rounds[i];
      std::vector<std::size_t> ids;
      for (const auto& t : live) ids.push_back(t.trial.id);
      entering.push_back(ids);

      for (auto& t : live) {
        if (t.status == TrialStatus::Failed) continue;
        const std::size_t from = t.epochs_trained;
        const std::size_t to = round.epochs;
        auto hit = replay.find({t.trial.id, to});
        const bool replayed = hit != replay.end() && (*hit->second)["config"] == t.trial.config;
        if (replayed) {
          const json& r = *hit->second;
          t.status = r.value("status", std::string("ok")) == "ok" ? TrialStatus::Ok : TrialStatus::Failed;
          t.objective = r["objective"].is_number() ? r["objective"].get<double>()
                                                   : std::numeric_limits<double>::infinity();
          t.error = r.value("error", std::string());
        } else {
          try {
            t.objective = runner.run(t.trial, from, to);
            if (!std::isfinite(t.objective)) {
              t.status = TrialStatus::Failed;
              t.error = "non-finite objective";
              t.objective = std::numeric_limits<double>::infinity();
            }
          } catch (const std::exception& e) {
            t.status = TrialStatus::Failed;
            t.error = e.what();
            t.objective = std::numeric_limits<double>::infinity();
          }
        }
        t.epochs_used += to - from;
        used += to - from;
        t.epochs_trained = to;
        if (t.status == TrialStatus::Failed) log::warn("trial " + std::to_string(t.trial.id) + " failed: " + t.error);
        if (options.ledger && !replayed) *options.ledger << record(t, i).dump() << '\n' << std::flush;
      }

      std::vector<TrialResult> order = live;
      std::stable_sort(order.begin(), order.end(), better);
      const std::size_t keep = i + 1 < bracket.rounds.size() ? bracket.rounds[i + 1].configs : 0;
      for (std::size_t k = keep; k < order.size(); ++k) {
        runner.release(order[k].trial.id);
        finals.push_back(order[k]);
      }
      order.resize(std::min(keep, order.size()));
      live = std::move(order);
    }
    for (auto& t : live) finals.push_back(std::move(t));
    result.epochs_per_bracket.push_back(used);
    result.survivors.push_back(std::move(entering));
  }

  // Trials that reached more epochs carry a more reliable objective, but the
  // ranking is purely by objective so it is comparable across brackets.
  std::stable_sort(finals.begin(), finals.end(), better);
  result.ranked = std::move(finals);
  return result;
}

}  // namespace efbg
