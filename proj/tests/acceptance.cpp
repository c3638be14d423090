// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance PATH_TO_LATENTMC_CLI

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace latentmc;
using testsupport::randn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::MatrixXd sample_matrix(const ChainRecord& rec) {
  Eigen::MatrixXd x(rec.n_samples(), rec.dim);
  for (std::size_t i = 0; i < rec.n_samples(); ++i)
    for (std::size_t j = 0; j < rec.dim; ++j) x(i, j) = rec.samples[i * rec.dim + j];
  return x;
}

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - mu;
  return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

Eigen::VectorXd batch_se(const Eigen::MatrixXd& x, Eigen::Index batches = 50) {
  const Eigen::Index bs = x.rows() / batches;
  const Eigen::RowVectorXd mu = x.topRows(bs * batches).colwise().mean();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index b = 0; b < batches; ++b) {
    const Eigen::RowVectorXd m = x.middleRows(b * bs, bs).colwise().mean() - mu;
    s += m.transpose().cwiseAbs2();
  }
  return (s / static_cast<double>((batches - 1) * batches)).cwiseSqrt();
}

Outcome check_leapfrog_order() {
  testsupport::GaussianPotential pot{{1.0, 0.5, 2.0}};
  const Vector z0{1.0, 0.3, -0.8}, r0{0.3, -0.7, 1.1};
  std::vector<double> le, lerr;
  for (double eps : {0.2, 0.1, 0.05, 0.025}) {
    HmcParams p;
    p.epsilon = eps;
    p.n_leapfrog = static_cast<int>(std::lround(1.0 / eps));
    const auto s0 = make_state(pot, z0, r0);
    le.push_back(std::log(eps));
    lerr.push_back(std::log(std::abs(hamiltonian(leapfrog(s0, pot, p).state) - hamiltonian(s0))));
  }
  double mx = 0, my = 0, sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < 4; ++i) mx += le[i] / 4, my += lerr[i] / 4;
  for (std::size_t i = 0; i < 4; ++i) sxy += (le[i] - mx) * (lerr[i] - my), sxx += (le[i] - mx) * (le[i] - mx);
  const double slope = sxy / sxx;

  auto fx = testsupport::make_linear_fixture(8, 4, 0.05, 4);
  const auto post = fx.posterior();
  std::mt19937_64 rng(4);
  HmcParams p;
  p.epsilon = 0.01;
  p.n_leapfrog = 20;
  const auto s0 = make_state(post, randn(4, rng, 0.5), randn(4, rng));
  auto fwd = leapfrog(s0, post, p).state;
  for (auto& v : fwd.r) v = -v;
  const auto back = leapfrog(fwd, post, p).state;
  double resid = 0.0;
  for (int i = 0; i < 4; ++i) resid = std::max({resid, std::abs(back.z[i] - s0.z[i]), std::abs(back.r[i] + s0.r[i])});
  return {std::abs(slope - 2.0) <= 0.1 && resid < 1e-10, fmt("slope %.4f, reversibility residual %.2e", slope, resid)};
}

template <class L>
nn::Layer randomized(const std::string& name, L op, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::LayerOp o(std::move(op));
  nn::detail::randomize_op(o, rng);
  return nn::Layer(name, std::move(o));
}

Outcome check_gradient_oracle() {
  using namespace nn;
  const Shape img{2, 4, 4};
  std::vector<Layer> layers;
  layers.push_back(randomized("dense", Dense(img, 5), 1));
  layers.push_back(randomized("conv", Conv(2, 3, 3, 1, 1, 4, 4), 2));
  layers.push_back(randomized("conv_s2", Conv(2, 3, 3, 2, 1, 5, 5), 3));
  layers.push_back(randomized("convt", ConvTranspose(2, 3, 4, 2, 1, 3, 3), 4));
  layers.push_back(randomized("frn", Frn(img), 5));
  layers.push_back(randomized("tlu", Tlu(img), 6));
  layers.push_back(randomized("lrelu", LeakyRelu(img, 0.2), 7));
  layers.push_back(randomized("tanh", TanhLayer(img), 8));
  layers.push_back(randomized("bn", BatchNorm(img), 9));
  layers.push_back(randomized("pool", AvgPool(img, 2), 10));
  layers.push_back(randomized("gap", GlobalAvgPool(img), 11));
  layers.push_back(randomized("up", Upsample(img, 2), 12));
  layers.push_back(randomized("reshape", Reshape(img, Shape{4, 2, 4}), 13));
  layers.push_back(randomized("flatten", Flatten(img), 14));
  {
    std::mt19937_64 rng(15);
    SelfAttention a(4, 2, 2, 3);
    for (auto* w : {&a.wu, &a.wv, &a.wg, &a.wphi}) *w = randn(w->size(), rng, 0.5);
    a.lambda = {0.8};
    layers.emplace_back("attn", std::move(a));
  }
  layers.push_back(randomized("sn_conv", SpectralNorm(Conv(2, 2, 3, 1, 1, 4, 4)), 16));
  for (auto kind : {LayerKind::ResBlock, LayerKind::ResBlockUp, LayerKind::ResBlockDown}) {
    std::mt19937_64 rng(20);
    LayerOp op = make_residual(kind, 2, kind == LayerKind::ResBlock ? 3 : 2, 4, 4, true);
    nn::detail::randomize_op(op, rng);
    layers.emplace_back(kind_name(kind), std::move(op));
  }
  double worst = 0.0;
  std::string worst_name;
  for (const auto& l : layers) {
    const double e = testsupport::layer_vjp_error(l, 20, 100);
    if (e > worst) worst = e, worst_name = l.name;
  }
  std::mt19937_64 rng(30);
  NetworkGraph net;
  net.input_shape = {2, 4, 4};
  net.layers.emplace_back("block1", make_residual(LayerKind::ResBlock, 2, 2, 4, 4, true));
  net.layers.emplace_back("block2", make_residual(LayerKind::ResBlockUp, 2, 2, 4, 4, true));
  net.layers.emplace_back("attn", SelfAttention(2, 1, 8, 8));
  net.layers.emplace_back("block3", make_residual(LayerKind::ResBlockDown, 2, 3, 8, 8, false));
  randomize(net, rng);
  const double composite = testsupport::network_vjp_error(net, 20, 31);
  return {worst < 1e-3 && composite < 1e-3,
          fmt("%zu layers worst %.2e (%s), composite %.2e", layers.size(), worst, worst_name.c_str(), composite)};
}

Outcome check_conjugate_gaussian() {
  auto fx = testsupport::make_linear_fixture(8, 4, 0.05, 3, true);
  ChainConfig cfg;
  cfg.kind = ChainKind::HmcPcn;
  cfg.n_samples = 200000;
  cfg.burn_in = 5000;
  cfg.target_accept = 0.97;
  cfg.seed = 2024;
  const auto rec = run_chain(fx.posterior(), cfg);
  const auto x = sample_matrix(rec);
  const Eigen::VectorXd mu = x.colwise().mean().transpose();
  const auto se = batch_se(x);
  double worst_z = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) worst_z = std::max(worst_z, std::abs(mu(i) - fx.mean(i)) / se(i));
  const double frob = (sample_cov(x) - fx.cov).norm() / fx.cov.norm();
  return {worst_z < 3.0 && frob < 0.05,
          fmt("mean within %.2f SE, covariance error %.2f%% Frobenius, acceptance %.3f", worst_z, 100 * frob,
              rec.acceptance_rate())};
}

Outcome check_pcn_reference() {
  ChainConfig cfg;
  cfg.kind = ChainKind::PcnLatent;
  cfg.pcn_beta = 0.8;
  cfg.n_samples = 100000;
  cfg.seed = 13;
  const auto rec = run_chain(testsupport::ZeroPhi{5}, cfg);
  const double dev = (sample_cov(sample_matrix(rec)) - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff();
  return {dev < 0.03, fmt("max |C - I| = %.4f", dev)};
}

Outcome check_momentum_refresh() {
  const Vector mass{1.0, 2.0, 0.5};
  double worst = 0.0;
  for (double beta : {0.1, 0.5, 0.9}) {
    HmcParams p;
    p.beta = beta;
    p.mass = mass;
    std::mt19937_64 rng(9);
    const int n = 100000;
    Eigen::MatrixXd out(n, 3);
    for (int i = 0; i < n; ++i) {
      auto r = sample_momentum(3, p, rng);
      refresh_momentum(r, p, rng);
      for (int j = 0; j < 3; ++j) out(i, j) = r[j];
    }
    const auto c = sample_cov(out);
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        worst = std::max(worst, std::abs(c(j, k) - (j == k ? mass[j] : 0.0)) / std::sqrt(mass[j] * mass[k]));
  }
  return {worst < 0.03, fmt("max relative deviation from M %.4f", worst)};
}

Outcome check_radon_adjoint() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (std::size_t side : {32u, 64u}) {
    const RadonOperator op(RadonGeometry::make(side));
    for (int t = 0; t < 100; ++t) {
      const auto x = randn(op.input_size(), rng), y = randn(op.output_size(), rng);
      const double lhs = dot(op.apply(x), y), rhs = dot(x, op.adjoint(y));
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12));
    }
  }
  return {worst < 1e-5, fmt("worst relative error %.2e over 200 trials", worst)};
}

Outcome check_fbp_sanity() {
  const std::size_t side = 64;
  const auto g = RadonGeometry::make(side, 180);
  const auto truth = testsupport::supersampled_disc(side, 20.0);
  const auto clean = radon(truth, g);
  const double p_clean = psnr(fbp(clean, g), truth);
  std::mt19937_64 rng(11);
  const double p_noisy = psnr(fbp(add_noise(clean, 0.1, rng).sinogram, g), truth);
  return {p_clean >= testsupport::kDiscFbpAnchor && p_clean - p_noisy >= 10.0,
          fmt("noiseless %.2f dB (anchor %.2f), 10%% noise %.2f dB", p_clean, testsupport::kDiscFbpAnchor, p_noisy)};
}

Outcome check_ergodicity() {
  auto fx = testsupport::make_linear_fixture(8, 4, 0.05, 26, true);
  const auto lip = nn::lipschitz_bound(fx.generator);
  if (!lip.bounded) return {false, "no Lipschitz certificate"};
  const auto rep = check_ergodicity_conditions(fx.posterior(), lip.bound, 10000, 4.0);
  const std::size_t v = rep.growth_violations + rep.lipschitz_violations + rep.generator_violations;
  return {v == 0 && rep.max_generator_ratio <= lip.bound,
          fmt("%zu violations over %zu pairs, observed ratio %.6f <= certified %.6f", v, rep.probes,
              rep.max_generator_ratio, lip.bound)};
}

Outcome check_spectral_norm() {
  std::mt19937_64 rng(51);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t r = dim(rng), c = dim(rng);
    const auto w = randn(r * c, rng);
    const auto sn = nn::spectral_normalize(Matrix(r, c, w), 5000);
    Eigen::MatrixXd m(r, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) m(i, j) = w[i * c + j];
    const double s = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
    worst = std::max(worst, std::abs(sn.sigma_est - s) / s);
  }
  return {worst < 1e-4, fmt("worst relative error %.2e over 50 matrices", worst)};
}

Outcome check_hpdi_calibration() {
  const auto c = testsupport::hpdi_calibration(2000, 1000, 9);
  return {c.coverage95 >= 93.0 && c.coverage95 <= 97.0 && c.monotone,
          fmt("95%% coverage %.2f%%, 99%% coverage %.2f%%, monotone %s", c.coverage95, c.coverage99,
              c.monotone ? "yes" : "no")};
}

Outcome check_mmd() {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n0(0.0, 1.0), n5(5.0, 1.0);
  auto draw = [&](auto& d) {
    std::vector<Vector> s(500, Vector(1));
    for (auto& v : s) v[0] = d(rng);
    return s;
  };
  const auto a = draw(n0), b = draw(n0), c = draw(n5);
  const auto same = mmd(a, b, 1.0);
  const auto far = mmd(a, c, 1.0);
  return {std::abs(same.value) <= 2.0 * same.standard_error && far.value > 0.5,
          fmt("same %.4f (SE %.4f), N(0,1) vs N(5,1) %.4f", same.value, same.standard_error, far.value)};
}

Outcome check_chi_discrepancy() {
  const std::size_t n = 10000;
  const auto fx = testsupport::coinciding_chains(n, 20);
  const auto d = chain_discrepancy(fx.x, fx.g);
  const double envelope = 4.0 * fx.trace_cov / static_cast<double>(n);
  const double plateau = 4.0 * fx.trace_cov / static_cast<double>(n / 10);
  bool flat = true;
  for (const auto& pt : d)
    if (pt.n >= n / 10) flat = flat && pt.chi < plateau;
  return {d.back().n == n && d.back().chi < envelope && flat,
          fmt("chi at n=%zu %.5f (envelope %.5f), below %.5f for n >= %zu: %s", d.back().n, d.back().chi, envelope,
              plateau, n / 10, flat ? "yes" : "no")};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

Outcome check_cli_determinism(const std::string& cli) {
  const fs::path fixtures = LATENTMC_FIXTURE_DIR;
  const fs::path work = fs::temp_directory_path() / "latentmc_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  setenv("LATENTMC_LOG", "quiet", 1);
  const auto g = (fixtures / "linear_generator.sartnet").string();

  struct Step {
    std::string cmd, name, config, extra;
  };
  auto w = [&](const std::string& s) { return (work / s).string(); };
  const std::vector<Step> steps = {
      {"phantom", "phantom", "seed = 11\nphantom.side = 32\n", ""},
      {"sinogram", "sino", "seed = 3\nnoise.gamma = 0.1\ninput.image = " + w("phantom_1/phantom.lmi") + "\n", ""},
      {"fbp", "fbp", "input.sinogram = " + w("sino_1/sinogram_noisy.lmi") + "\n", ""},
      {"sinogram", "meas",
       "seed = 5\nnoise.gamma = 0.1\ninput.image = " + (fixtures / "linear_truth.lmi").string() + "\n", ""},
      {"sample", "hmc",
       "seed = 7\nsampler.kind = HMCpCN\nsampler.n_samples = 1000\nsampler.chains = 2\ninput.generator = " + g +
           "\ninput.measurement = " + w("meas_1/sinogram_noisy.lmi") + "\ninput.manifest = " +
           w("meas_1/sinogram.manifest") + "\n",
       "--workers 2"},
      {"sample", "tv",
       "seed = 9\nsampler.kind = pCN-TV\nsampler.pcn_beta = 0.02\nsampler.n_samples = 500\ninput.measurement = " +
           w("meas_1/sinogram_noisy.lmi") + "\ninput.manifest = " + w("meas_1/sinogram.manifest") + "\n",
       ""},
      {"metrics", "metrics",
       "input.truth = " + (fixtures / "linear_truth.lmi").string() + "\ninput.estimates = " + w("hmc_1/mean.lmi") +
           "\ninput.chain = " + w("hmc_1/chain.lmc") + "\ninput.generator = " + g + "\n",
       ""},
      {"dims", "dims",
       "seed = 4\ninput.dataset = " + (fixtures / "dataset.lmc").string() + "\ninput.encoders = " +
           (fixtures / "linear_encoder.sartnet").string() + "," + (fixtures / "padding_encoder.sartnet").string() +
           "\n",
       ""},
      {"ergocheck", "ergo",
       "seed = 6\nergo.probes = 1000\ninput.generator = " + g + "\ninput.measurement = " +
           w("meas_1/sinogram_noisy.lmi") + "\ninput.manifest = " + w("meas_1/sinogram.manifest") + "\n",
       ""},
      {"discrepancy", "disc",
       "input.x_chain = " + w("tv_1/chain.lmc") + "\ninput.z_chain = " + w("hmc_1/chain.lmc") +
           "\ninput.generator = " + g + "\n",
       ""},
  };
  std::size_t files = 0;
  std::set<std::string> commands;
  for (const auto& s : steps) {
    const auto cfg = w(s.name + ".cfg");
    std::ofstream(cfg) << s.config;
    for (const char* run : {"_1", "_2"}) {
      const std::string line =
          "\"" + cli + "\" " + s.cmd + " --config \"" + cfg + "\" --out \"" + w(s.name + run) + "\" " + s.extra;
      if (std::system(line.c_str()) != 0) return {false, s.cmd + " (" + s.name + ") failed"};
    }
    for (const auto& e : fs::directory_iterator(w(s.name + "_1"))) {
      const auto other = fs::path(w(s.name + "_2")) / e.path().filename();
      if (!fs::exists(other) || slurp(e.path()) != slurp(other))
        return {false, s.cmd + ": " + e.path().filename().string() + " differs between reruns"};
      ++files;
    }
    commands.insert(s.cmd);
  }
  return {commands.size() == 8, fmt("%zu commands, %zu output files byte-identical", commands.size(), files)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: acceptance PATH_TO_LATENTMC_CLI\n";
    return 2;
  }
  const std::string cli = argv[1];
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"leapfrog order and reversibility", check_leapfrog_order},
      {"gradient oracle", check_gradient_oracle},
      {"conjugate Gaussian end-to-end", check_conjugate_gaussian},
      {"pCN reference invariance", check_pcn_reference},
      {"momentum refresh invariance", check_momentum_refresh},
      {"Radon adjointness", check_radon_adjoint},
      {"FBP sanity", check_fbp_sanity},
      {"ergodicity conditions", check_ergodicity},
      {"spectral norm", check_spectral_norm},
      {"HPDI calibration", check_hpdi_calibration},
      {"MMD", check_mmd},
      {"chi_n discrepancy", check_chi_discrepancy},
      {"CLI determinism", [&] { return check_cli_determinism(cli); }},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << fmt(" [%.1fs]", secs) << std::endl;
    failures += !o.pass;
  }
  std::cout << (failures == 0 ? "all criteria passed" : fmt("%d criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
