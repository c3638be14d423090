#pragma once

// Chain driver: burn-in (with optional step-size adaptation), thinning,
// recording, parallel multi-chain runs and the chain file format.

#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "latentmc/io/binary.hpp"
#include "latentmc/sampler/hmc.hpp"

namespace latentmc {

enum class ChainKind : std::uint8_t { Hmc, HmcPcn, PcnLatent, PcnTv };

inline std::string kind_name(ChainKind k) {
  switch (k) {
    case ChainKind::Hmc: return "HMC";
    case ChainKind::HmcPcn: return "HMCpCN";
    case ChainKind::PcnLatent: return "pCN-latent";
    case ChainKind::PcnTv: return "pCN-TV";
  }
  return "?";
}

inline ChainKind parse_chain_kind(const std::string& s) {
  for (auto k : {ChainKind::Hmc, ChainKind::HmcPcn, ChainKind::PcnLatent, ChainKind::PcnTv})
    if (kind_name(k) == s) return k;
  throw Error("unknown sampler kind '" + s + "' (expected HMC, HMCpCN, pCN-latent or pCN-TV)");
}

inline bool uses_gradients(ChainKind k) { return k == ChainKind::Hmc || k == ChainKind::HmcPcn; }

struct ChainConfig {
  ChainKind kind = ChainKind::HmcPcn;
  HmcParams hmc;
  double pcn_beta = 0.1;
  std::size_t n_samples = 1000;
  std::optional<std::size_t> burn_in;  // default: 20% of n_samples
  std::size_t thin = 1;
  std::uint64_t seed = 0;
  bool adapt_step_size = true;
  double target_accept = 0.65;
  Vector initial;  // empty: start at the origin

  std::size_t effective_burn_in() const { return burn_in ? *burn_in : n_samples / 5; }

  void validate(std::size_t dim) const {
    if (n_samples < 1) throw Error("n_samples must be >= 1");
    if (thin < 1) throw Error("thin must be >= 1");
    if (uses_gradients(kind)) hmc.validate(dim);
    else if (!(pcn_beta > 0.0 && pcn_beta <= 1.0)) throw Error("pcn beta must lie in (0, 1]");
    if (!(target_accept > 0.0 && target_accept < 1.0)) throw Error("target acceptance must lie in (0, 1)");
    if (!initial.empty() && initial.size() != dim) throw ShapeError("initial state dimension mismatch");
  }
};

struct ChainRecord {
  std::size_t dim = 0;
  Vector samples;      // n_samples x dim, row-major, thinned
  Vector log_density;  // per retained sample
  Vector potential;    // per transition (burn-in included), -log density of the current state
  std::vector<std::uint8_t> accept_trace;  // per transition
  std::size_t accept_count = 0;            // over the sampling phase
  std::size_t proposals = 0;               // over the sampling phase
  std::size_t divergences = 0;
  double final_epsilon = 0.0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> params;

  std::size_t n_samples() const { return dim == 0 ? 0 : samples.size() / dim; }
  std::span<const double> sample(std::size_t i) const { return {samples.data() + i * dim, dim}; }
  double acceptance_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(accept_count) / static_cast<double>(proposals);
  }
  bool operator==(const ChainRecord&) const = default;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::map<std::string, std::string> snapshot(const ChainConfig& c, double eps_final) {
  std::map<std::string, std::string> p;
  p["kind"] = kind_name(c.kind);
  p["n_samples"] = std::to_string(c.n_samples);
  p["burn_in"] = std::to_string(c.effective_burn_in());
  p["thin"] = std::to_string(c.thin);
  p["seed"] = std::to_string(c.seed);
  if (uses_gradients(c.kind)) {
    p["epsilon"] = fmt_double(c.hmc.epsilon);
    p["epsilon_final"] = fmt_double(eps_final);
    p["n_leapfrog"] = std::to_string(c.hmc.n_leapfrog);
    p["adapt_step_size"] = c.adapt_step_size ? "1" : "0";
    p["target_accept"] = fmt_double(c.target_accept);
    if (c.kind == ChainKind::HmcPcn) {
      p["beta"] = fmt_double(c.hmc.beta);
      p["flip_on_reject"] = c.hmc.flip_on_reject ? "1" : "0";
    }
    p["mass"] = c.hmc.mass.empty() ? "identity" : "diagonal";
  } else {
    p["beta"] = fmt_double(c.pcn_beta);
  }
  return p;
}

}  // namespace detail

/// Runs one chain. Gradient kinds need a DifferentiablePotential; pCN kinds a
/// PcnTarget, whose log density is -(phi(x) + ||x||^2 / 2).
template <class Target>
ChainRecord run_chain(const Target& target, ChainConfig cfg) {
  const std::size_t dim = target.dim();
  cfg.validate(dim);
  std::mt19937_64 rng(cfg.seed);
  const std::size_t burn = cfg.effective_burn_in();
  const std::size_t total = burn + cfg.n_samples * cfg.thin;

  ChainRecord rec;
  rec.dim = dim;
  rec.seed = cfg.seed;
  rec.samples.reserve(cfg.n_samples * dim);
  rec.log_density.reserve(cfg.n_samples);
  rec.potential.reserve(total);
  rec.accept_trace.reserve(total);
  Vector start = cfg.initial.empty() ? Vector(dim, 0.0) : cfg.initial;

  auto record = [&](std::size_t it, const StepResult& res, double neg_log_density, std::span<const double> x) {
    rec.potential.push_back(neg_log_density);
    rec.accept_trace.push_back(res.accepted ? 1 : 0);
    if (res.diverged) ++rec.divergences;
    if (it < burn) return;
    ++rec.proposals;
    if (res.accepted) ++rec.accept_count;
    if ((it - burn + 1) % cfg.thin == 0) {
      rec.samples.insert(rec.samples.end(), x.begin(), x.end());
      rec.log_density.push_back(-neg_log_density);
    }
  };

  if (uses_gradients(cfg.kind)) {
    if constexpr (DifferentiablePotential<Target>) {
      HmcParams p = cfg.hmc;
      ChainState state = make_state(target, std::move(start));
      if (cfg.kind == ChainKind::HmcPcn) state.r = sample_momentum(dim, p, rng);
      DualAveraging adapt(p.epsilon, cfg.target_accept);
      for (std::size_t it = 0; it < total; ++it) {
        const auto res = cfg.kind == ChainKind::Hmc ? hmc_step(state, target, p, rng)
                                                     : hmc_pcn_step(state, target, p, rng);
        if (cfg.adapt_step_size && it < burn) {
          adapt.update(res.accept_prob);
          p.epsilon = it + 1 == burn ? adapt.final_epsilon() : adapt.current();
        }
        record(it, res, state.potential, state.z);
      }
      rec.final_epsilon = p.epsilon;
    } else {
      throw Error(kind_name(cfg.kind) + " needs a differentiable posterior");
    }
  } else {
    if constexpr (PcnTarget<Target>) {
      PcnState state = make_pcn_state(target, std::move(start));
      for (std::size_t it = 0; it < total; ++it) {
        const auto res = pcn_step(state, target, cfg.pcn_beta, rng);
        record(it, res, state.phi + 0.5 * squared_norm(state.x), state.x);
      }
    } else {
      throw Error(kind_name(cfg.kind) + " needs a pCN target");
    }
  }
  rec.params = detail::snapshot(cfg, rec.final_epsilon);
  return rec;
}

/// Independent chains, one per seed, spread over `workers` threads. The result
/// is ordered by seed position regardless of scheduling.
template <class Target>
std::vector<ChainRecord> run_chains(const Target& target, const ChainConfig& cfg,
                                    const std::vector<std::uint64_t>& seeds, unsigned workers) {
  std::vector<ChainRecord> out(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(seeds.size())));
  auto job = [&](std::size_t first) {
    for (std::size_t i = first; i < seeds.size(); i += workers) {
      try {
        ChainConfig c = cfg;
        c.seed = seeds[i];
        out[i] = run_chain(target, std::move(c));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    job(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(job, w);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Concatenates records in the given order.
inline ChainRecord merge_records(const std::vector<ChainRecord>& recs) {
  if (recs.empty()) throw InsufficientDataError("merge_records: no records");
  ChainRecord m;
  m.dim = recs.front().dim;
  m.seed = recs.front().seed;
  m.params = recs.front().params;
  std::string seeds;
  for (const auto& r : recs) {
    if (r.dim != m.dim) throw ShapeError("merge_records: dimension mismatch");
    m.samples.insert(m.samples.end(), r.samples.begin(), r.samples.end());
    m.log_density.insert(m.log_density.end(), r.log_density.begin(), r.log_density.end());
    m.potential.insert(m.potential.end(), r.potential.begin(), r.potential.end());
    m.accept_trace.insert(m.accept_trace.end(), r.accept_trace.begin(), r.accept_trace.end());
    m.accept_count += r.accept_count;
    m.proposals += r.proposals;
    m.divergences += r.divergences;
    seeds += (seeds.empty() ? "" : ",") + std::to_string(r.seed);
  }
  m.final_epsilon = recs.front().final_epsilon;
  m.params["chains"] = std::to_string(recs.size());
  m.params["seeds"] = seeds;
  return m;
}

// ---- chain file ----

inline constexpr std::string_view kChainMagic = "LMCCHN01";
inline constexpr std::string_view kLogDensityTag = "LOGP";

inline std::string format_params(const std::map<std::string, std::string>& p) {
  std::string s;
  for (const auto& [k, v] : p) s += k + "=" + v + "\n";
  return s;
}

inline std::map<std::string, std::string> parse_params(const std::string& text) {
  std::map<std::string, std::string> p;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("chain file: malformed params line '" + line + "'");
    p[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return p;
}

/// Samples and log densities are stored as float32, so a reloaded record
/// carries rounded values. Traces of the potential are not stored here; see
/// write_diagnostics_csv.
inline std::vector<unsigned char> encode_chain(const ChainRecord& r) {
  io::Writer w;
  w.magic(kChainMagic);
  auto params = r.params;
  params["accept_count"] = std::to_string(r.accept_count);
  params["proposals"] = std::to_string(r.proposals);
  params["divergences"] = std::to_string(r.divergences);
  w.str(format_params(params));
  w.u64(r.n_samples());
  w.u32(static_cast<std::uint32_t>(r.dim));
  for (double v : r.samples) w.f32(static_cast<float>(v));
  w.u64(r.accept_trace.size());
  for (auto a : r.accept_trace) w.u8(a);
  if (!r.log_density.empty()) {
    if (r.log_density.size() != r.n_samples()) throw ShapeError("encode_chain: one log density per sample required");
    w.magic(kLogDensityTag);
    for (double v : r.log_density) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

inline void write_chain(const std::string& path, const ChainRecord& r) {
  const auto bytes = encode_chain(r);
  io::Writer w;
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

inline ChainRecord decode_chain(io::Reader& in) {
  if (!in.magic(kChainMagic)) throw IoError("not a chain file (bad magic)");
  ChainRecord r;
  r.params = parse_params(in.str());
  const auto n = in.u64();
  r.dim = in.u32();
  if (r.dim == 0 && n > 0) throw IoError("chain file: zero dimension");
  if (n * r.dim * 4 > in.remaining()) throw io::TruncatedError("chain file: sample block truncated");
  r.samples.resize(n * r.dim);
  for (auto& v : r.samples) v = in.f32();
  const auto t = in.u64();
  if (t > in.remaining()) throw io::TruncatedError("chain file: acceptance trace truncated");
  r.accept_trace.resize(t);
  for (auto& a : r.accept_trace) a = in.u8();
  if (!in.at_end()) {
    if (!in.magic(kLogDensityTag)) throw IoError("chain file: unknown trailing section");
    if (n * 4 > in.remaining()) throw io::TruncatedError("chain file: log-density block truncated");
    r.log_density.resize(n);
    for (auto& v : r.log_density) v = in.f32();
  }
  if (!in.at_end()) throw IoError("chain file: trailing data");
  auto take = [&](const char* key) -> std::size_t {
    auto it = r.params.find(key);
    if (it == r.params.end()) return 0;
    const auto v = std::stoull(it->second);
    r.params.erase(it);
    return static_cast<std::size_t>(v);
  };
  r.accept_count = take("accept_count");
  r.proposals = take("proposals");
  r.divergences = take("divergences");
  if (auto it = r.params.find("seed"); it != r.params.end()) r.seed = std::stoull(it->second);
  if (auto it = r.params.find("epsilon_final"); it != r.params.end()) r.final_epsilon = std::stod(it->second);
  return r;
}

inline ChainRecord read_chain(const std::string& path) {
  auto in = io::Reader::from_file(path);
  return decode_chain(in);
}

/// iteration,potential,accept; one row per transition.
inline std::string diagnostics_csv(const ChainRecord& r) {
  std::string s = "iteration,potential,accept\n";
  for (std::size_t i = 0; i < r.potential.size(); ++i)
    s += std::to_string(i) + "," + detail::fmt_double(r.potential[i]) + "," + std::to_string(r.accept_trace[i]) + "\n";
  return s;
}

}  // namespace latentmc
