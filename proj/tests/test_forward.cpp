#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "latentmc/forward/fbp.hpp"
#include "latentmc/forward/image_io.hpp"
#include "latentmc/forward/noise.hpp"
#include "latentmc/forward/phantom.hpp"
#include "latentmc/forward/radon.hpp"
#include "support.hpp"

using namespace latentmc;
using testsupport::kDiscFbpAnchor;
using testsupport::supersampled_disc;

namespace {

Vector random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

double psnr_local(const ImageGrid& a, const ImageGrid& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.values()[i] - b.values()[i]) * (a.values()[i] - b.values()[i]);
  return -10.0 * std::log10(s / static_cast<double>(a.size()));
}

}  // namespace

TEST(Geometry, DefaultAngleCountIsHalfTheSide) {
  const auto g = RadonGeometry::make(32);
  EXPECT_EQ(g.n_angles, 16u);
  EXPECT_EQ(g.n_detectors, 32u);
  EXPECT_DOUBLE_EQ(g.angles.front(), 0.0);
  EXPECT_LT(g.angles.back(), std::numbers::pi);
}

TEST(Radon, ZeroImageGivesZeroSinogram) {
  const auto g = RadonGeometry::make(32);
  const auto s = radon(ImageGrid(32), g);
  EXPECT_EQ(s.values.rows, 16u);
  EXPECT_EQ(s.values.cols, 32u);
  for (double v : s.values.values) EXPECT_EQ(v, 0.0);
}

TEST(Radon, ShapeMismatchThrows) {
  const auto g = RadonGeometry::make(32);
  EXPECT_THROW(radon(ImageGrid(16), g), ShapeError);
  EXPECT_THROW(radon_adjoint(Sinogram(RadonGeometry::make(16)), g), ShapeError);
}

TEST(Radon, CentralPixelPeaksAtCentralBin) {
  const auto g = RadonGeometry::make(33, 24);
  ImageGrid img(33);
  img(16, 16) = 1.0;
  const auto s = radon(img, g);
  for (std::size_t a = 0; a < g.n_angles; ++a) {
    std::size_t best = 0;
    for (std::size_t d = 1; d < g.n_detectors; ++d)
      if (s(a, d) > s(a, best)) best = d;
    EXPECT_EQ(best, 16u) << "angle " << a;
  }
}

TEST(Radon, Linearity) {
  std::mt19937_64 rng(1);
  const RadonOperator op(RadonGeometry::make(24));
  const auto x1 = random_vector(op.input_size(), rng), x2 = random_vector(op.input_size(), rng);
  Vector mix(x1.size());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.5 * x1[i] - 0.75 * x2[i];
  const auto y = op.apply(mix), y1 = op.apply(x1), y2 = op.apply(x2);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], 2.5 * y1[i] - 0.75 * y2[i], 1e-10);
}

TEST(Radon, DiscMatchesChordLength) {
  const std::size_t side = 48;
  const double radius = 14.0;
  const auto g = RadonGeometry::make(side, 12);
  const auto s = radon(supersampled_disc(side, radius), g);
  double worst = 0.0, mean_err = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < g.n_angles; ++a)
    for (std::size_t d = 0; d < g.n_detectors; ++d) {
      const double off = g.detector_offset(d);
      if (std::abs(off) > radius - 1.0) continue;  // rim bins are dominated by pixelation
      const double chord = 2.0 * std::sqrt(radius * radius - off * off);
      worst = std::max(worst, std::abs(s(a, d) - chord));
      mean_err += std::abs(s(a, d) - chord);
      ++count;
    }
  mean_err /= static_cast<double>(count);
  EXPECT_LT(mean_err, 0.15);
  EXPECT_LT(worst, 0.6);
}

TEST(Radon, RotationByQuarterTurnPermutesRows) {
  // a 90 degree image rotation maps angle theta to theta + pi/2
  const std::size_t side = 20;
  const auto g = RadonGeometry::make(side, 8);
  std::mt19937_64 rng(4);
  ImageGrid img(side), rot(side);
  std::uniform_real_distribution<double> u;
  for (auto& v : img.values()) v = u(rng);
  // (x, y) -> (-y, x): rot(r, c) = img(c', r') with the pixel-centre convention
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) rot(r, c) = img(c, side - 1 - r);
  const auto s = radon(img, g), sr = radon(rot, g);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t d = 0; d < side; ++d) EXPECT_NEAR(sr(a + 4, d), s(a, d), 1e-9);
}

TEST(RadonAdjoint, ZeroSinogramGivesZeroImage) {
  const auto g = RadonGeometry::make(16);
  const auto img = radon_adjoint(Sinogram(g), g);
  for (double v : img.values()) EXPECT_EQ(v, 0.0);
}

TEST(RadonAdjoint, DotProductIdentity) {
  std::mt19937_64 rng(2);
  for (std::size_t side : {16u, 32u}) {
    const RadonOperator op(RadonGeometry::make(side));
    for (int t = 0; t < 20; ++t) {
      const auto x = random_vector(op.input_size(), rng), y = random_vector(op.output_size(), rng);
      const double lhs = dot(op.apply(x), y), rhs = dot(x, op.adjoint(y));
      EXPECT_LT(std::abs(lhs - rhs), 1e-5 * std::max(std::abs(lhs), 1e-12)) << side;
    }
  }
}

TEST(RadonAdjoint, OneHotEntrySmearsOneRay) {
  const auto g = RadonGeometry::make(16, 4);
  Sinogram s(g);
  s(0, 7) = 1.0;  // angle 0: ray direction is vertical, offset along x
  const auto img = radon_adjoint(s, g);
  // weights of that single ray, column-wise: only columns near x = offset are touched
  const double off = g.detector_offset(7);
  double total = 0.0;
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c) {
      const double x = static_cast<double>(c) - 7.5;
      if (std::abs(x - off) >= 1.0) {
        EXPECT_EQ(img(r, c), 0.0);
      }
      total += img(r, c);
    }
  // a ray through the full image has unit-density length equal to the side
  EXPECT_NEAR(total, 16.0, 0.6);
}

TEST(OperatorNorm, MatchesDenseSingularValue) {
  const RadonOperator op(RadonGeometry::make(8));
  // dense A^T A and its top eigenvalue by many plain power steps
  const std::size_t n = op.input_size();
  std::vector<Vector> cols;
  for (std::size_t j = 0; j < n; ++j) {
    Vector e(n, 0.0);
    e[j] = 1.0;
    cols.push_back(op.adjoint(op.apply(e)));
  }
  Vector v(n, 1.0);
  double lambda = 0.0;
  for (int it = 0; it < 5000; ++it) {
    Vector w(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) axpy(v[j], cols[j], w);
    lambda = norm(w);
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / lambda;
  }
  EXPECT_NEAR(operator_norm(op), std::sqrt(lambda), 1e-6 * std::sqrt(lambda));
}

TEST(Fbp, ZeroSinogramGivesZeroImage) {
  const auto g = RadonGeometry::make(32);
  const auto img = fbp(Sinogram(g), g);
  for (double v : img.values()) EXPECT_EQ(v, 0.0);
}

TEST(Fbp, NeedsTwoAngles) {
  const auto g = RadonGeometry::make(16, 1);
  EXPECT_THROW(fbp(Sinogram(g), g), InsufficientDataError);
}

TEST(Fbp, FftRoundTrip) {
  std::mt19937_64 rng(3);
  std::vector<std::complex<double>> data(64);
  for (auto& c : data) c = {std::normal_distribution<double>()(rng), 0.0};
  auto copy = data;
  detail::fft(copy, false);
  detail::fft(copy, true);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_NEAR(copy[i].real(), data[i].real(), 1e-12);
}


TEST(Fbp, NoiselessDiscMeetsAnchorAndNoiseCollapsesIt) {
  const std::size_t side = 64;
  const auto g = RadonGeometry::make(side, 180);
  const auto truth = supersampled_disc(side, 20.0);
  const auto clean = radon(truth, g);
  const double p_clean = psnr_local(fbp(clean, g), truth);
  EXPECT_GE(p_clean, kDiscFbpAnchor);
  std::mt19937_64 rng(11);
  const auto noisy = add_noise(clean, 0.1, rng);
  const double p_noisy = psnr_local(fbp(noisy.sinogram, g), truth);
  EXPECT_GE(p_clean - p_noisy, 10.0);
  // the windowed filter trades resolution for noise
  EXPECT_GT(psnr_local(fbp(noisy.sinogram, g, FbpFilter::Hann), truth), p_noisy);
}

TEST(Noise, ZeroGammaIsExactCopy) {
  const auto g = RadonGeometry::make(16);
  std::mt19937_64 rng(1);
  Sinogram s(g);
  s(2, 3) = 4.0;
  const auto out = add_noise(s, 0.0, rng);
  EXPECT_EQ(out.sinogram.values, s.values);
  EXPECT_EQ(out.sigma, kSigmaFloor);
}

TEST(Noise, SigmaFromCleanMaximum) {
  const auto g = RadonGeometry::make(8);
  Sinogram s(g);
  s(1, 1) = -50.0;
  s(2, 2) = 10.0;
  std::mt19937_64 rng(1);
  EXPECT_DOUBLE_EQ(add_noise(s, 0.1, rng).sigma, 5.0);
}

TEST(Noise, EmpiricalSdMatchesSigma) {
  const auto g = RadonGeometry::make(32);  // 16 x 32 sinogram
  Sinogram s(g);
  s(0, 0) = 1.0;
  double ss = 0.0;
  std::size_t n = 0;
  double sigma = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const auto out = add_noise(s, 0.1, rng);
    sigma = out.sigma;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const double d = out.sinogram.values.values[i] - s.values.values[i];
      ss += d * d;
      ++n;
    }
  }
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(n)), sigma, 0.03 * sigma);
}

TEST(Noise, SeedDeterminism) {
  const auto g = RadonGeometry::make(16);
  const auto s = radon(ImageGrid(16, 0.5), g);
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(add_noise(s, 0.1, a).sinogram.values, add_noise(s, 0.1, b).sinogram.values);
}

TEST(Phantom, RejectsZeroFeatures) {
  PhantomSpec spec;
  spec.n_features = 0;
  EXPECT_THROW(spec.validate(), Error);
  EXPECT_THROW(generate_phantom(spec), Error);
}

TEST(Phantom, DeterministicAndInRange) {
  PhantomSpec spec;
  spec.seed = 42;
  const auto a = generate_phantom(spec), b = generate_phantom(spec);
  EXPECT_EQ(a, b);
  for (double v : a.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  spec.seed = 43;
  EXPECT_NE(generate_phantom(spec), a);
}

TEST(Phantom, CentreRadiusFollowsTruncatedPlacementLaw) {
  // centres ~ N(0, s^2 I) conditioned on |c| < R; |c|/s is Rayleigh truncated at a = R/s
  PhantomSpec spec;
  spec.side = 64;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    spec.seed = seed;
    for (const auto& f : phantom_layout(spec)) {
      sum += std::hypot(f.cx, f.cy);
      ++n;
    }
  }
  const double radius = spec.effective_radius(), s = spec.placement_scale * radius, a = radius / s;
  const double tail = std::exp(-a * a / 2.0);
  const double expected =
      s * (-a * tail + std::sqrt(std::numbers::pi / 2.0) * std::erf(a / std::sqrt(2.0))) / (1.0 - tail);
  EXPECT_NEAR(sum / static_cast<double>(n), expected, 0.05 * expected);
}

TEST(ImageIo, RoundTripAndBadMagic) {
  const auto dir = std::filesystem::temp_directory_path() / "latentmc_test_io";
  std::filesystem::create_directories(dir);
  PhantomSpec spec;
  spec.seed = 5;
  const auto img = generate_phantom(spec);
  const auto path = (dir / "img.bin").string();
  write_image(path, img);
  const auto back = read_image(path);
  ASSERT_EQ(back.side(), img.side());
  for (std::size_t i = 0; i < img.size(); ++i)
    EXPECT_EQ(back.values()[i], static_cast<double>(static_cast<float>(img.values()[i])));
  io::Reader bad(std::vector<unsigned char>{'X', 'X', 'X', 'X', 'X', 'X', 'X', 'X', 0, 0});
  EXPECT_THROW(decode_matrix(bad), IoError);
  auto bytes = encode_matrix(img.to_matrix());
  bytes.resize(30);
  io::Reader trunc(std::move(bytes));
  EXPECT_THROW(decode_matrix(trunc), io::TruncatedError);
  write_pgm((dir / "img.pgm").string(), img.to_matrix());
  const auto pgm = read_pgm((dir / "img.pgm").string());
  EXPECT_EQ(pgm.rows, img.side());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(pgm.values[i], img.values()[i], 0.5 / 255.0 + 1e-12);
}
