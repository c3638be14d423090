#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "support.hpp"

using namespace latentmc;
using namespace latentmc::nn;

namespace {

NetworkGraph small_generator() {
  std::mt19937_64 rng(7);
  return sa_generator(6, 8, 4, rng);
}

LoadError::Code load_code(std::vector<unsigned char> bytes) {
  try {
    decode_network(std::move(bytes));
  } catch (const LoadError& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode unexpectedly succeeded";
  return LoadError::Code::TrailingData;
}

constexpr std::size_t kFirstLayerOffset = 8 + 4 + 1 + 4 + 12 + 4;

}  // namespace

TEST(Serialize, RoundTripIsBitExact) {
  const auto net = small_generator();
  const auto bytes = encode_network(net);
  const auto back = decode_network(bytes);
  EXPECT_EQ(encode_network(back), bytes);
  ASSERT_EQ(back.layers.size(), net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    EXPECT_EQ(back.layers[i].name, net.layers[i].name);
    EXPECT_EQ(back.layers[i].kind(), net.layers[i].kind());
  }
  // a second trip is the identity on float32 parameters
  const auto again = decode_network(encode_network(back));
  std::mt19937_64 rng(8);
  const auto z = testsupport::randn(6, rng);
  EXPECT_EQ(forward(again, z), forward(back, z));
}

TEST(Serialize, FileRoundTrip) {
  const auto net = small_generator();
  const auto path = (std::filesystem::temp_directory_path() / "latentmc_roundtrip.bin").string();
  save_network(path, net);
  EXPECT_EQ(encode_network(load_network(path)), encode_network(net));
  std::remove(path.c_str());
  EXPECT_THROW(load_network(path), IoError);
}

TEST(Serialize, DistinctErrorCodes) {
  const auto good = encode_network(small_generator());

  auto magic = good;
  magic[0] = 'X';
  EXPECT_EQ(load_code(magic), LoadError::Code::BadMagic);

  auto version = good;
  version[8] = 9;
  EXPECT_EQ(load_code(version), LoadError::Code::UnsupportedVersion);

  auto trunc = good;
  trunc.resize(good.size() - 5);
  EXPECT_EQ(load_code(trunc), LoadError::Code::Truncated);
  trunc.resize(kFirstLayerOffset - 3);
  EXPECT_EQ(load_code(trunc), LoadError::Code::Truncated);

  auto kind = good;
  kind[kFirstLayerOffset] = 0xEE;
  kind[kFirstLayerOffset + 1] = 0xEE;
  EXPECT_EQ(load_code(kind), LoadError::Code::UnknownKind);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(load_code(trailing), LoadError::Code::TrailingData);

  auto nan_net = small_generator();
  std::get<ConvTranspose>(std::get<SpectralNorm>(nan_net.layers.front().op).inner).bias[0] = std::nan("");
  EXPECT_EQ(load_code(encode_network(nan_net)), LoadError::Code::NonFinite);

  NetworkGraph broken;
  broken.input_shape = {3, 1, 1};
  broken.layers.emplace_back("a", Dense(Shape{3, 1, 1}, 4));
  broken.layers.emplace_back("b", Dense(Shape{5, 1, 1}, 2));
  EXPECT_EQ(load_code(encode_network(broken)), LoadError::Code::ShapeInconsistent);
}

TEST(Serialize, ErrorNamesOffendingLayer) {
  NetworkGraph broken;
  broken.input_shape = {3, 1, 1};
  broken.layers.emplace_back("first", Dense(Shape{3, 1, 1}, 4));
  broken.layers.emplace_back("second", Dense(Shape{5, 1, 1}, 2));
  try {
    decode_network(encode_network(broken));
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("second"), std::string::npos) << e.what();
  }
}

TEST(Manifest, RoundTripAndFingerprint) {
  const auto net = small_generator();
  const auto m = network_manifest(net, 8);
  EXPECT_EQ(m.at("role"), "generator");
  EXPECT_EQ(m.at("latent_dim"), "6");
  EXPECT_EQ(m.at("image_side"), "8");
  const auto path = (std::filesystem::temp_directory_path() / "latentmc_manifest.txt").string();
  write_manifest(path, m);
  EXPECT_EQ(read_manifest(path), m);
  std::remove(path.c_str());

  auto other = net;
  std::get<ConvTranspose>(std::get<SpectralNorm>(other.layers.front().op).inner).bias[0] += 1.0;
  EXPECT_NE(network_manifest(other, 8).at("provenance"), m.at("provenance"));
  // FNV-1a reference values
  EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ull);
  const unsigned char a[] = {'a'};
  EXPECT_EQ(fnv1a64(a), 0xaf63dc4c8601ec8cull);
}
