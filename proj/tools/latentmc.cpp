// latentmc command-line driver: phantom, sinogram, fbp, sample, metrics, dims,
// ergocheck, discrepancy. Every command is a pure function of the config file,
// its input files and the seed.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "latentmc/latentmc.hpp"

namespace fs = std::filesystem;
using namespace latentmc;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kIoError = 3, kNumericalError = 4 };

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- logging ----

enum class LogLevel { Quiet, Error, Warn, Info, Debug };

LogLevel g_level = LogLevel::Info;

void init_logging() {
  const char* env = std::getenv("LATENTMC_LOG");
  if (!env) return;
  const std::string v = env;
  if (v == "quiet" || v == "off") g_level = LogLevel::Quiet;
  else if (v == "error") g_level = LogLevel::Error;
  else if (v == "warn") g_level = LogLevel::Warn;
  else if (v == "info") g_level = LogLevel::Info;
  else if (v == "debug") g_level = LogLevel::Debug;
  else std::cerr << "[warn] unknown LATENTMC_LOG level '" << v << "', using info\n";
}

void log(LogLevel level, const std::string& msg) {
  if (level > g_level) return;
  static const char* names[] = {"", "error", "warn", "info", "debug"};
  std::cerr << '[' << names[static_cast<int>(level)] << "] " << msg << '\n';
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// ---- config ----

const std::set<std::string> kKnownKeys = {
    "seed", "out", "workers",
    "phantom.side", "phantom.features", "phantom.min_intensity", "phantom.max_intensity",
    "phantom.placement_radius", "phantom.placement_scale",
    "input.image", "input.sinogram", "input.measurement", "input.manifest", "input.sigma", "input.generator",
    "input.truth", "input.estimates", "input.chain", "input.encoders", "input.dataset", "input.x_chain",
    "input.z_chain",
    "geometry.angles", "noise.gamma", "fbp.filter",
    "sampler.kind", "sampler.epsilon", "sampler.n_leapfrog", "sampler.beta", "sampler.pcn_beta",
    "sampler.n_samples", "sampler.burn_in", "sampler.thin", "sampler.adapt", "sampler.target_accept",
    "sampler.chains", "sampler.flip_on_reject", "sampler.phi_includes_prior", "sampler.divergence_limit",
    "tv.tau",
    "analysis.alpha", "analysis.band",
    "metrics.alphas",
    "dims.tolerance",
    "ergo.probes", "ergo.radius",
    "discrepancy.per_decade",
};

class Config {
public:
  Config() = default;

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    Config c;
    c.base_ = fs::path(path).parent_path();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      if (!kKnownKeys.count(key)) throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
      if (c.values_.count(key)) throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      c.values_[key] = value;
    }
    return c;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string str(const std::string& key, const std::string& def) const { return has(key) ? values_.at(key) : def; }

  std::string require(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing required config key '" + key + "'");
    return values_.at(key);
  }

  /// Paths are resolved against the directory of the config file.
  std::string path(const std::string& key) const {
    fs::path p = require(key);
    if (p.is_relative() && !base_.empty()) p = base_ / p;
    return p.string();
  }

  std::vector<std::string> path_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(require(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      fs::path p = item;
      if (p.is_relative() && !base_.empty()) p = base_ / p;
      out.push_back(p.string());
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' lists no paths");
    return out;
  }

  double number(const std::string& key, double def) const {
    if (!has(key)) return def;
    return parse_double(key, values_.at(key));
  }

  std::uint64_t integer(const std::string& key, std::uint64_t def) const {
    if (!has(key)) return def;
    const auto& v = values_.at(key);
    std::size_t pos = 0;
    std::uint64_t out = 0;
    try {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      out = std::stoull(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != v.size() || v.empty()) throw ConfigError("config key '" + key + "' needs a non-negative integer, got '" + v + "'");
    return out;
  }

  bool flag(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const auto& v = values_.at(key);
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("config key '" + key + "' needs a boolean, got '" + v + "'");
  }

  std::vector<double> numbers(const std::string& key, const std::string& def) const {
    std::vector<double> out;
    std::stringstream ss(str(key, def));
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(parse_double(key, item));
    return out;
  }

private:
  static double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out = 0.0;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != v.size() || v.empty()) throw ConfigError("config key '" + key + "' needs a number, got '" + v + "'");
    return out;
  }

  std::map<std::string, std::string> values_;
  fs::path base_;
};

struct Context {
  Config cfg;
  fs::path out;
  unsigned workers = 1;
  bool phi_includes_prior = false;

  std::uint64_t seed() const {
    if (!cfg.has("seed")) throw ConfigError("a seed is required (config key 'seed' or --seed)");
    return cfg.integer("seed", 0);
  }
  std::string out_file(const std::string& name) const { return (out / name).string(); }
};

// ---- shared helpers ----

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << text;
  if (!f) throw IoError("write failed: " + path);
}

void write_csv(const std::string& path, const std::string& header, const std::vector<std::vector<std::string>>& rows) {
  std::string s = header + "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
    s += "\n";
  }
  write_text(path, s);
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw IoError(what + " not found: " + path);
}

/// PGM export scales [lo, hi] to [0, 255].
void write_pgm_scaled(const std::string& path, const Matrix& m, double lo, double hi) {
  Matrix s = m;
  const double span = hi > lo ? hi - lo : 1.0;
  for (auto& v : s.values) v = std::clamp((v - lo) / span, 0.0, 1.0);
  write_pgm(path, s);
}

void write_image_pair(const Context& ctx, const std::string& stem, const ImageGrid& img) {
  write_image(ctx.out_file(stem + ".lmi"), img);
  write_pgm_scaled(ctx.out_file(stem + ".pgm"), img.to_matrix(), 0.0, 1.0);
}

Sinogram load_sinogram(const std::string& path) {
  require_file(path, "sinogram");
  const auto m = read_matrix(path);
  if (m.rows == 0 || m.cols == 0) throw ShapeError("sinogram " + path + " is empty");
  const auto geom = RadonGeometry::make(m.cols, m.rows);
  return Sinogram(geom, m.values);
}

double measurement_sigma(const Context& ctx) {
  if (ctx.cfg.has("input.sigma")) {
    const double s = ctx.cfg.number("input.sigma", 0.0);
    if (!(s > 0.0)) throw ConfigError("input.sigma must be positive");
    return s;
  }
  if (ctx.cfg.has("input.manifest")) {
    const auto path = ctx.cfg.path("input.manifest");
    require_file(path, "sinogram manifest");
    const auto m = nn::read_manifest(path);
    if (!m.count("sigma")) throw IoError("manifest " + path + " has no 'sigma' entry");
    return std::stod(m.at("sigma"));
  }
  throw ConfigError("the noise level is needed: set input.sigma or input.manifest");
}

nn::NetworkGraph load_generator(const Context& ctx) {
  const auto path = ctx.cfg.path("input.generator");
  require_file(path, "generator");
  auto net = nn::load_network(path);
  if (net.role != nn::NetworkRole::Generator) throw ConfigError("input.generator " + path + " is not a generator");
  log(LogLevel::Debug, "loaded generator " + path + " (" + std::to_string(net.layers.size()) + " layers)");
  return net;
}

ChainRecord load_chain(const std::string& path) {
  require_file(path, "chain file");
  return read_chain(path);
}

// ---- commands ----

int cmd_phantom(const Context& ctx) {
  PhantomSpec spec;
  spec.side = ctx.cfg.integer("phantom.side", spec.side);
  spec.n_features = ctx.cfg.integer("phantom.features", spec.n_features);
  spec.min_intensity = ctx.cfg.number("phantom.min_intensity", spec.min_intensity);
  spec.max_intensity = ctx.cfg.number("phantom.max_intensity", spec.max_intensity);
  spec.placement_radius = ctx.cfg.number("phantom.placement_radius", spec.placement_radius);
  spec.placement_scale = ctx.cfg.number("phantom.placement_scale", spec.placement_scale);
  spec.seed = ctx.seed();
  const auto img = generate_phantom(spec);
  write_image_pair(ctx, "phantom", img);
  log(LogLevel::Info, "phantom " + std::to_string(spec.side) + "x" + std::to_string(spec.side) + " written");
  return kOk;
}

int cmd_sinogram(const Context& ctx) {
  const auto path = ctx.cfg.path("input.image");
  require_file(path, "image");
  const auto img = read_image(path);
  const auto geom = RadonGeometry::make(img.side(), ctx.cfg.integer("geometry.angles", 0));
  const double gamma = ctx.cfg.number("noise.gamma", 0.0);
  std::mt19937_64 rng(ctx.seed());
  const auto clean = radon(img, geom);
  const auto noisy = add_noise(clean, gamma, rng);
  write_matrix(ctx.out_file("sinogram_clean.lmi"), clean.values);
  write_matrix(ctx.out_file("sinogram_noisy.lmi"), noisy.sinogram.values);
  write_pgm_scaled(ctx.out_file("sinogram_noisy.pgm"), noisy.sinogram.values, 0.0,
                   std::max(max_abs(clean.values.values), 1e-12));
  nn::write_manifest(ctx.out_file("sinogram.manifest"),
                     {{"image_side", std::to_string(geom.image_side)},
                      {"n_angles", std::to_string(geom.n_angles)},
                      {"n_detectors", std::to_string(geom.n_detectors)},
                      {"gamma", detail::fmt_double(gamma)},
                      {"sigma", detail::fmt_double(noisy.sigma)},
                      {"clean_max", detail::fmt_double(max_abs(clean.values.values))}});
  log(LogLevel::Info, "sinogram " + std::to_string(geom.n_angles) + " angles x " + std::to_string(geom.n_detectors) +
                          " detectors, sigma " + fmt(noisy.sigma));
  return kOk;
}

FbpFilter parse_filter(const std::string& s) {
  if (s == "ramlak" || s == "ram-lak") return FbpFilter::RamLak;
  if (s == "hann") return FbpFilter::Hann;
  throw ConfigError("fbp.filter must be 'ramlak' or 'hann', got '" + s + "'");
}

int cmd_fbp(const Context& ctx) {
  const auto sino = load_sinogram(ctx.cfg.path("input.sinogram"));
  const auto img = fbp(sino, sino.geometry, parse_filter(ctx.cfg.str("fbp.filter", "ramlak")));
  write_image_pair(ctx, "fbp", img);
  return kOk;
}

ChainConfig chain_config(const Context& ctx) {
  ChainConfig c;
  c.kind = parse_chain_kind(ctx.cfg.str("sampler.kind", "HMCpCN"));
  c.hmc.epsilon = ctx.cfg.number("sampler.epsilon", c.hmc.epsilon);
  c.hmc.n_leapfrog = static_cast<int>(ctx.cfg.integer("sampler.n_leapfrog", c.hmc.n_leapfrog));
  c.hmc.beta = ctx.cfg.number("sampler.beta", c.hmc.beta);
  c.hmc.flip_on_reject = ctx.cfg.flag("sampler.flip_on_reject", false);
  c.pcn_beta = ctx.cfg.number("sampler.pcn_beta", c.pcn_beta);
  c.n_samples = ctx.cfg.integer("sampler.n_samples", c.n_samples);
  if (ctx.cfg.has("sampler.burn_in")) c.burn_in = ctx.cfg.integer("sampler.burn_in", 0);
  c.thin = ctx.cfg.integer("sampler.thin", c.thin);
  c.adapt_step_size = ctx.cfg.flag("sampler.adapt", c.adapt_step_size);
  c.target_accept = ctx.cfg.number("sampler.target_accept", c.target_accept);
  c.seed = ctx.seed();
  return c;
}

BandMode parse_band(const std::string& s) {
  if (s == "envelope") return BandMode::Envelope;
  if (s == "quantile") return BandMode::Quantile;
  throw ConfigError("analysis.band must be 'envelope' or 'quantile', got '" + s + "'");
}

template <class Target>
ChainRecord sample_chains(const Context& ctx, const Target& target, const ChainConfig& cfg) {
  const auto n_chains = ctx.cfg.integer("sampler.chains", 1);
  if (n_chains < 1) throw ConfigError("sampler.chains must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < n_chains; ++i) seeds.push_back(cfg.seed + i);
  log(LogLevel::Info, "running " + std::to_string(n_chains) + " " + kind_name(cfg.kind) + " chain(s) of " +
                          std::to_string(cfg.n_samples) + " samples on " + std::to_string(ctx.workers) + " worker(s)");
  auto recs = run_chains(target, cfg, seeds, ctx.workers);
  return recs.size() == 1 ? std::move(recs.front()) : merge_records(recs);
}

int cmd_sample(const Context& ctx) {
  const auto cfg = chain_config(ctx);
  const auto sino = load_sinogram(ctx.cfg.path("input.measurement"));
  const double sigma = measurement_sigma(ctx);
  const double alpha = ctx.cfg.number("analysis.alpha", 0.05);
  const auto band = parse_band(ctx.cfg.str("analysis.band", "envelope"));
  RadonOperator op(sino.geometry);

  ChainRecord rec;
  std::vector<Vector> images;
  if (cfg.kind == ChainKind::PcnTv) {
    TvPosterior post(op, sino.values.values, sigma, ctx.cfg.number("tv.tau", 1.0));
    rec = sample_chains(ctx, post, cfg);
    images = sample_images(rec);
  } else {
    const auto gen = load_generator(ctx);
    const bool with_prior = ctx.phi_includes_prior || ctx.cfg.flag("sampler.phi_includes_prior", false);
    LatentPosterior post(gen, op, sino.values.values, sigma, with_prior);
    rec = sample_chains(ctx, post, cfg);
    rec.params["phi_includes_prior"] = with_prior ? "1" : "0";
    images = pushforward(rec, gen);
  }

  const std::size_t transitions = rec.accept_trace.size();
  const double limit = ctx.cfg.number("sampler.divergence_limit", 0.5);
  if (transitions > 0 && static_cast<double>(rec.divergences) > limit * static_cast<double>(transitions))
    throw NumericalError("divergence storm: " + std::to_string(rec.divergences) + " of " + std::to_string(transitions) +
                         " transitions diverged");

  write_chain(ctx.out_file("chain.lmc"), rec);
  write_text(ctx.out_file("diagnostics.csv"), diagnostics_csv(rec));
  const auto s = summarize(images, rec.log_density, alpha, band);
  write_image_pair(ctx, "mean", s.mean);
  write_image(ctx.out_file("sd.lmi"), s.sd);
  write_pgm_scaled(ctx.out_file("sd.pgm"), s.sd.to_matrix(), 0.0, std::max(max_abs(s.sd.values()), 1e-12));
  write_image_pair(ctx, "lower", s.lower);
  write_image_pair(ctx, "upper", s.upper);
  write_csv(ctx.out_file("sample_summary.csv"), "quantity,value",
            {{"kind", kind_name(cfg.kind)},
             {"n_samples", std::to_string(rec.n_samples())},
             {"acceptance_rate", fmt(rec.acceptance_rate())},
             {"divergences", std::to_string(rec.divergences)},
             {"final_epsilon", fmt(rec.final_epsilon)},
             {"alpha", fmt(alpha)}});
  log(LogLevel::Info, "acceptance rate " + fmt(rec.acceptance_rate()) + ", divergences " +
                          std::to_string(rec.divergences));
  return kOk;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

int cmd_metrics(const Context& ctx) {
  const auto truth_path = ctx.cfg.path("input.truth");
  require_file(truth_path, "truth image");
  const auto truth = read_image(truth_path);
  std::vector<std::vector<std::string>> rows;
  if (ctx.cfg.has("input.estimates")) {
    for (const auto& path : ctx.cfg.path_list("input.estimates")) {
      require_file(path, "estimate image");
      const auto est = read_image(path);
      if (est.side() != truth.side()) throw ShapeError("estimate " + path + " does not match the truth image size");
      rows.push_back({"psnr", stem_of(path), fmt(psnr(est, truth))});
      if (truth.side() >= SsimOptions::kWindow) rows.push_back({"ssim", stem_of(path), fmt(ssim(est, truth))});
      else log(LogLevel::Warn, "image smaller than the SSIM window, ssim skipped for " + path);
    }
  }
  if (ctx.cfg.has("input.chain")) {
    const auto chain_path = ctx.cfg.path("input.chain");
    const auto rec = load_chain(chain_path);
    if (rec.log_density.size() != rec.n_samples())
      throw IoError("chain " + chain_path + " carries no per-sample log densities");
    std::vector<Vector> images;
    if (ctx.cfg.has("input.generator")) images = pushforward(rec, load_generator(ctx));
    else images = sample_images(rec);
    const auto band = parse_band(ctx.cfg.str("analysis.band", "envelope"));
    for (double a : ctx.cfg.numbers("metrics.alphas", "0.05,0.01")) {
      const double cov = hpdi_coverage(images, rec.log_density, truth.values(), a, band);
      rows.push_back({"hpdi_" + fmt(100.0 * (1.0 - a)), stem_of(chain_path), fmt(cov)});
    }
  }
  if (rows.empty()) throw ConfigError("metrics: nothing to evaluate (set input.estimates and/or input.chain)");
  write_csv(ctx.out_file("metrics.csv"), "metric,sample_id,value", rows);
  return kOk;
}

int cmd_dims(const Context& ctx) {
  const auto data_path = ctx.cfg.path("input.dataset");
  const auto dataset = sample_images(load_chain(data_path));
  const double tol = ctx.cfg.number("dims.tolerance", 0.05);
  std::vector<std::vector<std::string>> rows;
  for (const auto& path : ctx.cfg.path_list("input.encoders")) {
    require_file(path, "encoder");
    const auto enc = nn::load_network(path);
    if (enc.role != nn::NetworkRole::Encoder) throw ConfigError(path + " is not an encoder");
    const std::size_t m = enc.output_shape().size();
    std::vector<Vector> encoded;
    encoded.reserve(dataset.size());
    for (const auto& x : dataset) encoded.push_back(nn::forward(enc, x));
    std::mt19937_64 rng(ctx.seed());
    std::normal_distribution<double> normal;
    std::vector<Vector> prior(dataset.size(), Vector(m));
    for (auto& z : prior)
      for (auto& v : z) v = normal(rng);
    const auto rep = intrinsic_dimension(encoded, prior, tol);
    rows.push_back({std::to_string(m), stem_of(path), fmt(rep.trace_prior), fmt(rep.trace_encoded),
                    fmt(rep.trace_prior - rep.trace_encoded), verdict_name(rep.verdict)});
    const double peak = std::max(max_abs(rep.encoded_covariance.values), 1e-12);
    write_matrix(ctx.out_file("covariance_" + stem_of(path) + ".lmi"), rep.encoded_covariance);
    write_pgm_scaled(ctx.out_file("covariance_" + stem_of(path) + ".pgm"), rep.encoded_covariance, -peak, peak);
    log(LogLevel::Info, stem_of(path) + ": m=" + std::to_string(m) + " " + verdict_name(rep.verdict));
  }
  write_csv(ctx.out_file("dims.csv"), "latent_dim,checkpoint,trace_prior,trace_encoded,trace_gap,verdict", rows);
  return kOk;
}

int cmd_ergocheck(const Context& ctx) {
  const auto gen = load_generator(ctx);
  const auto sino = load_sinogram(ctx.cfg.path("input.measurement"));
  LatentPosterior post(gen, RadonOperator(sino.geometry), sino.values.values, measurement_sigma(ctx));
  const double radius = ctx.cfg.number("ergo.radius", 3.0);
  nn::LipschitzOptions lo;
  lo.input_radius = radius;
  const auto lip = nn::lipschitz_bound(gen, lo);
  if (!lip.bounded) throw NumericalError("no finite Lipschitz certificate; offending layer '" + lip.offending_layer + "'");
  const auto rep = check_ergodicity_conditions(post, lip.bound, ctx.cfg.integer("ergo.probes", 10000), radius, ctx.seed());
  write_csv(ctx.out_file("ergocheck.csv"), "quantity,value",
            {{"lipschitz_certified", fmt(rep.lipschitz)},
             {"operator_norm", fmt(rep.operator_norm)},
             {"g0_norm", fmt(rep.g0_norm)},
             {"y_norm", fmt(rep.y_norm)},
             {"sigma", fmt(rep.sigma)},
             {"radius", fmt(rep.radius)},
             {"b2", fmt(rep.b2)},
             {"k", fmt(rep.k)},
             {"k_c", fmt(rep.k_c)},
             {"probes", std::to_string(rep.probes)},
             {"max_growth_ratio", fmt(rep.max_growth_ratio)},
             {"max_lipschitz_ratio", fmt(rep.max_lipschitz_ratio)},
             {"max_generator_ratio", fmt(rep.max_generator_ratio)},
             {"growth_violations", std::to_string(rep.growth_violations)},
             {"lipschitz_violations", std::to_string(rep.lipschitz_violations)},
             {"generator_violations", std::to_string(rep.generator_violations)},
             {"passed", rep.passed() ? "1" : "0"}});
  log(rep.passed() ? LogLevel::Info : LogLevel::Warn,
      std::string("ergodicity conditions ") + (rep.passed() ? "hold" : "violated") + " on " +
          std::to_string(rep.probes) + " probe pairs");
  return kOk;
}

int cmd_discrepancy(const Context& ctx) {
  const auto x = sample_images(load_chain(ctx.cfg.path("input.x_chain")));
  const auto z = load_chain(ctx.cfg.path("input.z_chain"));
  const auto g = pushforward(z, load_generator(ctx));
  const auto series = chain_discrepancy(x, g, static_cast<int>(ctx.cfg.integer("discrepancy.per_decade", 10)));
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : series) rows.push_back({std::to_string(p.n), fmt(p.chi)});
  write_csv(ctx.out_file("discrepancy.csv"), "n,chi", rows);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"latentmc: latent-space MCMC for CT reconstruction"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  bool phi_includes_prior = false;
  app.add_option("--config", config_path, "config file (key=value)");
  app.add_option("--seed", seed, "random seed (overrides the config)");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--workers", workers, "parallel chains");
  app.add_flag("--phi-includes-prior", phi_includes_prior, "add ||z||^2/2 to the pCN-latent potential");

  const std::map<std::string, int (*)(const Context&)> commands = {
      {"phantom", cmd_phantom},   {"sinogram", cmd_sinogram}, {"fbp", cmd_fbp},
      {"sample", cmd_sample},     {"metrics", cmd_metrics},   {"dims", cmd_dims},
      {"ergocheck", cmd_ergocheck}, {"discrepancy", cmd_discrepancy}};
  const std::map<std::string, std::string> help = {
      {"phantom", "generate a random-ellipse phantom"},
      {"sinogram", "project an image and add measurement noise"},
      {"fbp", "filtered backprojection of a sinogram"},
      {"sample", "run the posterior sampler and summarise"},
      {"metrics", "PSNR/SSIM/HPDI against a truth image"},
      {"dims", "latent dimension check for encoder checkpoints"},
      {"ergocheck", "probe the ergodicity conditions of a posterior"},
      {"discrepancy", "chi_n between an image chain and a latent chain"}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name))->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  const auto* sub = app.get_subcommands().front();
  try {
    Context ctx;
    if (!config_path.empty()) ctx.cfg = Config::load(config_path);
    if (seed) ctx.cfg.set("seed", std::to_string(*seed));
    ctx.out = out_dir.empty() ? fs::path(ctx.cfg.str("out", "out")) : fs::path(out_dir);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    ctx.workers = workers ? *workers : static_cast<unsigned>(ctx.cfg.integer("workers", hw));
    if (ctx.workers == 0) throw ConfigError("workers must be >= 1");
    ctx.phi_includes_prior = phi_includes_prior;
    fs::create_directories(ctx.out);
    return commands.at(sub->get_name())(ctx);
  } catch (const ConfigError& e) {
    log(LogLevel::Error, std::string("config: ") + e.what());
    return kConfigError;
  } catch (const nn::LoadError& e) {
    log(LogLevel::Error, e.what());
    return e.code() == nn::LoadError::Code::NonFinite ? kNumericalError : kIoError;
  } catch (const NumericalError& e) {
    log(LogLevel::Error, std::string("numerical failure: ") + e.what());
    return kNumericalError;
  } catch (const IoError& e) {
    log(LogLevel::Error, std::string("i/o: ") + e.what());
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    log(LogLevel::Error, std::string("i/o: ") + e.what());
    return kIoError;
  } catch (const Error& e) {
    log(LogLevel::Error, std::string("config: ") + e.what());
    return kConfigError;
  }
}
