// Regenerates the small hand-constructed networks and data under tests/fixtures.
// Usage: make_fixtures OUT_DIR

#include <filesystem>
#include <iostream>

#include "latentmc/latentmc.hpp"

using namespace latentmc;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kSide = 16;
constexpr std::size_t kLatent = 8;
constexpr std::size_t kPadding = 4;
constexpr std::size_t kDatasetSize = 1000;

Vector randn(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Vector v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// p x m with orthonormal columns (Gram-Schmidt on Gaussian columns), row-major
Matrix orthonormal_columns(std::size_t p, std::size_t m, std::mt19937_64& rng) {
  std::vector<Vector> cols;
  for (std::size_t j = 0; j < m; ++j) {
    auto c = randn(p, rng);
    for (const auto& q : cols) {
      double d = 0.0;
      for (std::size_t i = 0; i < p; ++i) d += c[i] * q[i];
      for (std::size_t i = 0; i < p; ++i) c[i] -= d * q[i];
    }
    double n = 0.0;
    for (double v : c) n += v * v;
    n = std::sqrt(n);
    for (auto& v : c) v /= n;
    cols.push_back(std::move(c));
  }
  Matrix w(p, m, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < m; ++j) w(i, j) = cols[j][i];
  return w;
}

void save(const fs::path& dir, const std::string& stem, const nn::NetworkGraph& net) {
  nn::save_network((dir / (stem + ".sartnet")).string(), net);
  nn::write_manifest((dir / (stem + ".manifest")).string(), nn::network_manifest(net, kSide));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures OUT_DIR\n";
    return 2;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);
  std::mt19937_64 rng(20240611);
  const std::size_t p = kSide * kSide;

  // linear spectral-normed generator G(z) = W z + 0.4 with orthonormal W
  const auto q = orthonormal_columns(p, kLatent, rng);
  const Vector bias(p, 0.4);
  const auto gen = nn::linear_generator(q, bias, kSide, true);
  save(dir, "linear_generator", gen);
  const Matrix w(p, kLatent, std::get<nn::SpectralNorm>(gen.layers.front().op).weight());

  const auto z_true = randn(kLatent, rng);
  write_image((dir / "linear_truth.lmi").string(), ImageGrid(kSide, nn::forward(gen, z_true)));

  // encoder W^T (x - b), plus a variant with zero-padded extra outputs
  Matrix wt(kLatent, p, 0.0), padded(kLatent + kPadding, p, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < kLatent; ++j) wt(j, i) = padded(j, i) = w(i, j);
  Vector enc_bias(kLatent, 0.0), pad_bias(kLatent + kPadding, 0.0);
  for (std::size_t j = 0; j < kLatent; ++j) {
    for (std::size_t i = 0; i < p; ++i) enc_bias[j] -= w(i, j) * bias[i];
    pad_bias[j] = enc_bias[j];
  }
  save(dir, "linear_encoder", nn::linear_encoder(wt, enc_bias, kSide));
  save(dir, "padding_encoder", nn::linear_encoder(padded, pad_bias, kSide));

  // dataset of generator pushforwards of prior draws
  ChainRecord data;
  data.dim = p;
  data.params["role"] = "dataset";
  for (std::size_t k = 0; k < kDatasetSize; ++k) {
    const auto x = nn::forward(gen, randn(kLatent, rng));
    data.samples.insert(data.samples.end(), x.begin(), x.end());
  }
  write_chain((dir / "dataset.lmc").string(), data);

  // attention generator/encoder pair at desk scale
  save(dir, "sa_generator", nn::sa_generator(kLatent, kSide, 4, rng));
  save(dir, "sa_encoder", nn::sa_encoder(kSide, 4, kLatent, rng));
  std::cout << "fixtures written to " << dir.string() << '\n';
  return 0;
}
