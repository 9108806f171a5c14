#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "support.hpp"
#include "tsh/codebook.hpp"
#include "tsh/error.hpp"

using namespace tsh;

namespace {

SnippetHistogram hist(std::vector<float> v, int s = 0) {
  SnippetHistogram h;
  h.clip_id = "c";
  h.center_frame = s;
  h.values = std::move(v);
  return h;
}

DescriptorParams tiny_params() {
  DescriptorParams p;
  p.N = 1;  // dim 24
  return p;
}

std::vector<SnippetHistogram> clouds(std::size_t per, std::uint64_t seed, std::vector<double>* mean_a,
                                     std::vector<double>* mean_b) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0, 0.3);
  std::vector<SnippetHistogram> out;
  mean_a->assign(24, 0);
  mean_b->assign(24, 0);
  for (std::size_t i = 0; i < 2 * per; ++i) {
    const bool b = i % 2;
    std::vector<float> v(24);
    for (int d = 0; d < 24; ++d) {
      v[d] = static_cast<float>((b ? 20.0 : 2.0) + n(g));
      (b ? *mean_b : *mean_a)[d] += v[d] / per;
    }
    out.push_back(hist(v, static_cast<int>(i)));
  }
  return out;
}

}  // namespace

TEST_CASE("K equal to the number of distinct inputs reproduces the inputs") {
  std::vector<float> data;
  const std::vector<std::vector<float>> pts{{0, 0}, {5, 0}, {0, 7}, {9, 9}, {-3, 4}};
  for (int rep = 0; rep < 3; ++rep) {
    for (const auto& p : pts) data.insert(data.end(), p.begin(), p.end());
  }
  const auto r = kmeans(data, 2, 5, 1);
  CHECK(r.objective.back() == doctest::Approx(0.0));
  for (const auto& p : pts) {
    bool found = false;
    for (int k = 0; k < 5; ++k) found |= r.centroids[2 * k] == p[0] && r.centroids[2 * k + 1] == p[1];
    CHECK(found);
  }
}

TEST_CASE("two well-separated clouds: centroids within 0.1 of the sample means") {
  std::vector<double> ma, mb;
  const auto sample = clouds(300, 5, &ma, &mb);
  const auto cb = train_codebook(sample, 2, 3, tiny_params());
  REQUIRE(cb.K == 2);
  const int ia = cb.centroids[0] < 10 ? 0 : 1;
  for (int d = 0; d < 24; ++d) {
    CHECK(std::abs(cb.centroid(ia)[d] - ma[d]) < 0.1);
    CHECK(std::abs(cb.centroid(1 - ia)[d] - mb[d]) < 0.1);
  }
}

TEST_CASE("objective never increases and the run is reproducible") {
  std::mt19937_64 g(8);
  std::uniform_real_distribution<float> u(0, 10);
  std::vector<float> data(600 * 6);
  for (auto& x : data) x = u(g);
  const auto a = kmeans(data, 6, 12, 42);
  for (std::size_t i = 1; i < a.objective.size(); ++i) CHECK(a.objective[i] <= a.objective[i - 1] * (1 + 1e-12));
  const auto b = kmeans(data, 6, 12, 42);
  CHECK(a.centroids == b.centroids);
  CHECK(a.assignment == b.assignment);
  CHECK(a.iterations <= 100);
}

TEST_CASE("same seed and data give a bit-identical codebook") {
  std::vector<double> ma, mb;
  const auto sample = clouds(100, 9, &ma, &mb);
  CHECK(train_codebook(sample, 7, 4, tiny_params()) == train_codebook(sample, 7, 4, tiny_params()));
}

TEST_CASE("codebook errors") {
  std::vector<double> ma, mb;
  auto sample = clouds(2, 1, &ma, &mb);
  CHECK_THROWS_AS(train_codebook(sample, 5, 0, tiny_params()), ValidationError);
  CHECK_THROWS_AS(train_codebook(sample, 1, 0, tiny_params()), ValidationError);
  sample[1].values[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(train_codebook(sample, 2, 0, tiny_params()), ValidationError);
  sample = clouds(2, 1, &ma, &mb);
  sample[2].values.pop_back();
  CHECK_THROWS_AS(train_codebook(sample, 2, 0, tiny_params()), DimensionMismatch);
}

TEST_CASE("sample cap subsamples before clustering") {
  std::vector<double> ma, mb;
  const auto sample = clouds(200, 2, &ma, &mb);
  KMeansResult trace;
  const auto cb = train_codebook(sample, 2, 1, tiny_params(), &trace, 50);
  CHECK(trace.assignment.size() == 50);
  CHECK(cb.K == 2);
}

TEST_CASE("nearest center ties go to the lowest index") {
  const std::vector<float> centers{1, 0, -1, 0, 0, 1};
  const std::vector<float> origin{0, 0};
  CHECK(nearest_center(origin, centers, 2) == 0);
  const std::vector<float> x{-1, 0.5f};
  CHECK(nearest_center(x, centers, 2) == 1);
  CHECK(squared_distance(std::vector<float>{1, 2}, std::vector<float>{4, 6}) == 25);
}

TEST_CASE("BoW: snippets equal to centroid 3 give a one-hot count vector") {
  std::vector<double> ma, mb;
  const auto cb = train_codebook(clouds(20, 3, &ma, &mb), 5, 2, tiny_params());
  std::vector<float> c3(cb.centroid(3).begin(), cb.centroid(3).end());
  std::vector<SnippetHistogram> sn(30, hist(c3));
  const auto b = encode_bow(sn, cb);
  REQUIRE(b.counts.size() == 5);
  for (int k = 0; k < 5; ++k) CHECK(b.counts[k] == (k == 3 ? 30 : 0));
  CHECK(b.normalized[3] == 1.0);
}

TEST_CASE("BoW counts sum to the snippet count; normalized sums to one") {
  std::vector<double> ma, mb;
  const auto sample = clouds(15, 4, &ma, &mb);
  const auto cb = train_codebook(sample, 4, 2, tiny_params());
  const auto b = encode_bow(sample, cb);
  double sum = 0, nsum = 0;
  for (double c : b.counts) sum += c;
  for (double c : b.normalized) nsum += c;
  CHECK(sum == 30);
  CHECK(nsum == doctest::Approx(1.0));
}

TEST_CASE("BoW errors: empty list and dimension mismatch") {
  std::vector<double> ma, mb;
  const auto cb = train_codebook(clouds(10, 4, &ma, &mb), 3, 2, tiny_params());
  CHECK_THROWS_AS(encode_bow({}, cb), ValidationError);
  CHECK_THROWS_AS(encode_bow({hist(std::vector<float>(10, 1.f))}, cb), DimensionMismatch);
}

TEST_CASE("encoding the centroids maps each centroid to itself") {
  std::vector<double> ma, mb;
  const auto cb = train_codebook(clouds(60, 6, &ma, &mb), 6, 5, tiny_params());
  for (int k = 0; k < cb.K; ++k) CHECK(cb.assign(cb.centroid(k)) == k);
}

TEST_CASE("codebook file round trip") {
  tsh::testing::TempDir dir("codebook_io");
  std::vector<double> ma, mb;
  const auto cb = train_codebook(clouds(30, 7, &ma, &mb), 4, 9, tiny_params());
  write_codebook(dir / "cb.bin", cb, "hash1");
  std::string h;
  const auto back = read_codebook(dir / "cb.bin", &h);
  CHECK(back == cb);
  CHECK(h == "hash1");
  CHECK(back.params_fingerprint == tiny_params().fingerprint());
}
