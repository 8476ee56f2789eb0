#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "proxavg/metrics.hpp"
#include "proxavg/patches.hpp"
#include "proxavg/pgm.hpp"
#include "proxavg/reconstruct.hpp"
#include "proxavg/tensor_io.hpp"
#include "test_support.hpp"

using namespace proxavg;
using testing_support::random_tensor;

namespace {

std::string bytes_of(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Psnr, ClosedFormOffsets) {
  const Tensor ref({4, 4}, 0.5);
  EXPECT_NEAR(psnr(ref + Tensor({4, 4}, 0.1), ref), 20.0, 1e-9);
  EXPECT_NEAR(psnr(ref - Tensor({4, 4}, 0.01), ref), 40.0, 1e-9);
  EXPECT_EQ(psnr(ref, ref), kPsnrCap);
  EXPECT_NEAR(psnr(ref + Tensor({4, 4}, 25.5), ref, 255.0), 20.0, 1e-9);
  EXPECT_THROW(psnr(ref, Tensor({2, 8})), std::invalid_argument);
}

TEST(Psnr, DecreasesWithNoiseLevel) {
  std::mt19937_64 rng(1);
  const Tensor ref = random_tensor({32, 32}, rng, 0.0, 1.0);
  const Tensor noise = random_tensor({32, 32}, rng);
  double prev = INFINITY;
  for (double s : {0.001, 0.01, 0.05, 0.1, 0.3}) {
    const double p = psnr(ref + s * noise, ref);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, MatchesNaiveWindowOracle) {
  std::mt19937_64 rng(2);
  const Tensor a = random_tensor({24, 30}, rng, 0.0, 1.0);
  Tensor smooth({20, 20});
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j) smooth(i, j) = 0.5 + 0.4 * std::sin(0.3 * i) * std::cos(0.2 * j);
  const Tensor noisy = smooth + 0.05 * random_tensor({20, 20}, rng);
  const std::pair<Tensor, Tensor> probes[] = {
      {a, a + 0.1 * random_tensor({24, 30}, rng)},
      {smooth, noisy},
      {random_tensor({11, 11}, rng, 0.0, 1.0), random_tensor({11, 11}, rng, 0.0, 1.0)}};
  for (const auto& [x, y] : probes) EXPECT_NEAR(ssim(x, y), testing_support::naive_ssim(x, y), 1e-6);
}

TEST(Ssim, IdentityInversionAndShapes) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({16, 16}, rng, 0.0, 1.0);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
  Tensor inv = x;
  for (double& v : inv.data()) v = 1.0 - v;
  EXPECT_LT(ssim(inv, x), 0.5);
  EXPECT_NEAR(ssim(x.reshaped({1, 16, 16}), x), 1.0, 1e-12);
  EXPECT_THROW(ssim(Tensor({10, 10}), Tensor({10, 10})), std::invalid_argument);
  EXPECT_THROW(ssim(Tensor({12, 12}), Tensor({12, 13})), std::invalid_argument);
}

TEST(Pgm, ReadsHandcraftedBytes) {
  std::string bytes = "P5\n# comment\n2 2\n255\n";
  bytes += std::string("\x00\xff\x80\x33", 4);
  std::istringstream is(bytes);
  const Tensor img = read_pgm(is);
  ASSERT_EQ(img.shape(), (Shape{2, 2}));
  EXPECT_EQ(img(0, 0), 0.0);
  EXPECT_EQ(img(0, 1), 1.0);
  EXPECT_EQ(img(1, 0), 128.0 / 255.0);
  EXPECT_EQ(img(1, 1), 51.0 / 255.0);
}

TEST(Pgm, RoundTripIsByteStable) {
  const auto dir = std::filesystem::temp_directory_path() / "proxavg_pgm_test";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(4);
  Tensor img = random_tensor({7, 13}, rng, 0.0, 1.0);
  for (double& v : img.data()) v = std::round(v * 255.0) / 255.0;
  save_pgm(dir / "a.pgm", img);
  const Tensor back = load_pgm(dir / "a.pgm");
  EXPECT_LE(testing_support::max_abs_diff(back, img), 1e-15);
  save_pgm(dir / "b.pgm", back);
  EXPECT_EQ(bytes_of(dir / "a.pgm"), bytes_of(dir / "b.pgm"));
  std::filesystem::remove_all(dir);
}

TEST(Pgm, RejectsMalformedInput) {
  for (std::string bad : {std::string("P2\n2 2\n255\n0 0 0 0"), std::string("P5\nx 2\n255\n"),
                          std::string("P5\n2 2\n65535\n"), std::string("P5\n2 2\n255\n\x01"),
                          std::string("P5\n0 2\n255\n")}) {
    std::istringstream is(bad);
    EXPECT_THROW(read_pgm(is), std::runtime_error) << bad;
  }
  EXPECT_THROW(load_pgm("/nonexistent/file.pgm"), std::runtime_error);
}

TEST(TensorIo, RoundTripAndCorruption) {
  std::mt19937_64 rng(5);
  const std::vector<Tensor> ts = {random_tensor({3, 4, 5}, rng), Tensor({1}, std::vector<double>{-0.0}),
                                  Tensor({2}, std::vector<double>{1e-300, -7.5})};
  std::stringstream ss;
  for (const Tensor& t : ts) write_tensor(ss, t);
  for (const Tensor& t : ts) EXPECT_EQ(read_tensor(ss), t);
  EXPECT_TRUE(std::signbit(Tensor({1}, std::vector<double>{-0.0})[0]));

  std::stringstream bad("PAVT2xxxxxxxx");
  EXPECT_THROW(read_tensor(bad), std::runtime_error);
  std::stringstream full;
  write_tensor(full, ts[0]);
  std::string cut = full.str().substr(0, 30);
  std::stringstream truncated(cut);
  EXPECT_THROW(read_tensor(truncated), std::runtime_error);
}

TEST(Tiling, RoundTripAndEdgeReplication) {
  std::mt19937_64 rng(6);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{33, 33}, {40, 70}, {5, 9}}) {
    const Tensor img = random_tensor({h, w}, rng, 0.0, 1.0);
    const auto tiles = tile_image(img, 33);
    EXPECT_EQ(tiles.size(), ((h + 32) / 33) * ((w + 32) / 33));
    EXPECT_EQ(untile_image(tiles, h, w, 33), img);
    const Tensor& last = tiles.back();
    EXPECT_EQ(last(0, 32, 32), img(h - 1, w - 1));
  }
}

TEST(Reconstruct, BaselineIsPerTileAdjoint) {
  std::mt19937_64 rng(7);
  ModelConfig mc;
  mc.layers = 1;
  mc.filters = 2;
  NetworkModel model = NetworkModel::create(mc, 8);
  refresh_quantized_views(model);
  const SensingOperator op = make_sensing(81, 0.5, 9);
  const Tensor img = random_tensor({20, 14}, rng, 0.0, 1.0);
  const ImageReconstruction r = reconstruct_image(model, op, img, 9);
  EXPECT_EQ(r.image.shape(), img.shape());
  EXPECT_EQ(r.baseline.shape(), img.shape());
  const auto tiles = tile_image(img, 9);
  std::vector<Tensor> base;
  for (const Tensor& t : tiles) base.push_back(op.adjoint(op.measure(t)).reshaped(t.shape()));
  EXPECT_LE(testing_support::max_abs_diff(r.baseline, untile_image(base, 20, 14, 9)), 1e-15);
  const Tensor d = abs_difference(r.image, img);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d[i], std::abs(r.image[i] - img[i]));
  EXPECT_THROW(reconstruct_image(model, op, img, 8), std::invalid_argument);
}
