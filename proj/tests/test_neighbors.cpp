#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "support.hpp"

using namespace drnn;

namespace {

ObservationPanel random_panel(std::size_t n, std::size_t t, double p, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> z;
  std::bernoulli_distribution coin(p);
  RealMatrix y(n, t);
  MaskMatrix m(n, t);
  for (auto& v : y.flat()) v = z(rng);
  for (auto& a : m.flat()) a = coin(rng) ? 1 : 0;
  return {std::move(y), std::move(m)};
}

}  // namespace

TEST_CASE("unit distance examples", "[neighbors]") {
  const auto p = testing::full({{1, 2, 3, 9}, {1, 2, 5, -9}, {1, 2, 3, 0}});
  const IndexSet times{0, 1, 2};
  CHECK(unit_distance(p, 0, 2, 3, times) == 0.0);
  CHECK(unit_distance(p, 0, 1, 3, times) == 4.0 / 3.0);
  CHECK_THROWS_AS(unit_distance(p, 1, 1, 3, times), InvalidArgument);
  CHECK_THROWS_AS(unit_distance(p, 0, 1, 2, times), InvalidArgument);

  const ObservationPanel disjoint(testing::matrix({{1, 0, 5}, {0, 2, 5}}),
                                  testing::mask({{1, 0, 1}, {0, 1, 1}}));
  const IndexSet first_two{0, 1};
  CHECK(unit_distance(disjoint, 0, 1, 2, first_two) == kInf);
  CHECK(unit_distance(disjoint, 0, 1, 2, IndexSet{}) == kInf);
}

TEST_CASE("time distance examples", "[neighbors]") {
  const auto p = testing::full({{1, 3, 1}, {1, 5, 1}, {7, 7, 7}});
  const IndexSet units{0, 1};
  CHECK(time_distance(p, 0, 1, 2, units) == 10.0);
  CHECK(time_distance(p, 0, 2, 2, units) == 0.0);
  CHECK_THROWS_AS(time_distance(p, 1, 1, 2, units), InvalidArgument);
  CHECK_THROWS_AS(time_distance(p, 0, 1, 1, units), InvalidArgument);

  const ObservationPanel disjoint(testing::matrix({{1, 0}, {0, 2}}), testing::mask({{1, 0}, {0, 1}}));
  CHECK(time_distance(disjoint, 0, 1, 5, IndexSet{0, 1}) == kInf);
}

TEST_CASE("time distance uses the symmetric mask product", "[neighbors]") {
  // Unit 1 is observed at t = 0 but not t' = 1; it must not enter either sum.
  const ObservationPanel p(testing::matrix({{1, 3}, {100, 0}, {2, 2}}),
                           testing::mask({{1, 1}, {1, 0}, {1, 1}}));
  CHECK(time_distance(p, 0, 1, 9, IndexSet{0, 1, 2}) == 2.0);
}

TEST_CASE("batched distances match the single-pair functions", "[neighbors]") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto p = random_panel(9, 11, 0.6, seed);
    const TargetCell c{seed % 9, seed % 11};
    const auto units = all_except(9, c.unit);
    const auto times = all_except(11, c.time);
    const auto ud = all_unit_distances(p, c.unit, c.time, units, times);
    const auto td = all_time_distances(p, c.time, c.unit, times, units);
    REQUIRE(ud.size() == units.size());
    REQUIRE(td.size() == times.size());
    for (auto j : units) {
      const double rho = unit_distance(p, c.unit, j, c.time, times);
      CHECK((ud.at(j) == rho || (std::isinf(rho) && std::isinf(ud.at(j)))));
    }
    for (auto s : times) {
      const double rho = time_distance(p, c.time, s, c.unit, units);
      // Bit-for-bit: same summation order.
      CHECK(std::memcmp(&td.at(s), &rho, sizeof rho) == 0);
    }
  }
}

TEST_CASE("batched distance edge cases", "[neighbors]") {
  const auto same = testing::full({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
  for (const auto& [j, rho] : all_unit_distances(same, 0, 2, IndexSet{1, 2}, IndexSet{0, 1})) {
    CHECK(rho == 0.0);
  }
  const auto cols = testing::full({{4, 4, 4}, {5, 5, 5}, {6, 6, 6}});
  for (const auto& [s, rho] : all_time_distances(cols, 0, 2, IndexSet{1, 2}, IndexSet{0, 1})) {
    CHECK(rho == 0.0);
  }
  CHECK(all_unit_distances(same, 0, 2, IndexSet{}, IndexSet{0, 1}).empty());
  CHECK(all_time_distances(same, 0, 2, IndexSet{}, IndexSet{0, 1}).empty());
}

TEST_CASE("unit distance is symmetric", "[neighbors]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_panel(6, 8, 0.7, 100 + seed);
    const auto times = all_except(8, 3);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = i + 1; j < 6; ++j) {
        CHECK(unit_distance(p, i, j, 3, times) == unit_distance(p, j, i, 3, times));
      }
    }
  }
}

TEST_CASE("make_split is a deterministic partition", "[neighbors][split]") {
  const TargetCell c{2, 4};
  for (auto mode : {SplitMode::bernoulli_half, SplitMode::exact_half}) {
    const auto a = make_split(13, 17, c, 99, mode);
    CHECK(a == make_split(13, 17, c, 99, mode));
    CHECK(a.seed == 99);
    std::set<std::size_t> units(a.unit_half_1.begin(), a.unit_half_1.end());
    for (auto j : a.unit_half_2) CHECK(units.insert(j).second);
    CHECK(units == std::set<std::size_t>{0, 1, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    std::set<std::size_t> times(a.time_half_1.begin(), a.time_half_1.end());
    for (auto s : a.time_half_2) CHECK(times.insert(s).second);
    CHECK(times.size() == 16);
    CHECK_FALSE(times.contains(4));
  }
  CHECK_FALSE(make_split(13, 17, c, 99) == make_split(13, 17, c, 100));
  CHECK_FALSE(make_split(13, 17, c, 99) == make_split(13, 17, {3, 4}, 99));
}

TEST_CASE("exact_half balances halves", "[neighbors][split]") {
  std::set<std::size_t> sizes;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    const auto a = make_split(6, 3, {0, 0}, seed, SplitMode::exact_half);
    const auto n1 = a.unit_half_1.size();
    const auto n2 = a.unit_half_2.size();
    CHECK(n1 + n2 == 5);
    CHECK((n1 == 2 || n1 == 3));
    sizes.insert(n1);
  }
  CHECK(sizes == std::set<std::size_t>{2, 3});
}

TEST_CASE("bernoulli_half flips a fair coin per index", "[neighbors][split]") {
  // 200 splits of 101 non-target units: total half-1 count ~ Bin(20000, 1/2).
  std::size_t first = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    first += make_split(102, 2, {7, 0}, seed).unit_half_1.size();
  }
  const double n = 200.0 * 101.0;
  CHECK(std::fabs(static_cast<double>(first) - n / 2) <= 5.0 * std::sqrt(n / 4));
}

TEST_CASE("threshold selection is inclusive and skips infinity", "[neighbors]") {
  const DistanceMap d{{2, 0.5}, {3, 1.2}, {4, kInf}};
  CHECK(threshold_set(d, 1.0) == IndexSet{2});
  CHECK(threshold_set(DistanceMap{{2, 1.0}}, 1.0) == IndexSet{2});
  CHECK(threshold_set(d, kInf) == IndexSet{2, 3});
  CHECK(threshold_set(d, 0.0).empty());
}

TEST_CASE("select_neighbors without a split uses every other index", "[neighbors]") {
  const ObservationPanel p(testing::matrix({{1, 2, 3}, {1, 2, 4}, {0, 0, 9}, {5, 5, 5}}),
                           testing::mask({{1, 1, 1}, {1, 1, 1}, {0, 0, 1}, {1, 1, 1}}));
  const auto s = select_neighbors(p, {0, 2}, kInf, kInf);
  CHECK(s.unit_neighbors == IndexSet{1, 3});  // unit 2 never overlaps on t != 2
  CHECK(s.unit_distances.at(2) == kInf);
  CHECK(s.time_neighbors == IndexSet{0, 1});
  CHECK_FALSE(s.split.has_value());
  const auto tight = select_neighbors(p, {0, 2}, 0.0, 0.0);
  CHECK(tight.unit_neighbors == IndexSet{1});
  CHECK_THROWS_AS(select_neighbors(p, {0, 2}, -1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(select_neighbors(p, {4, 0}, 1.0, 1.0), InvalidArgument);
}

TEST_CASE("neighbor sets never contain the target and grow with eta", "[neighbors]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_panel(10, 12, 0.5, 300 + seed);
    const TargetCell c{seed % 10, (seed * 7) % 12};
    std::optional<SplitAssignment> split;
    if (seed % 2) split = make_split(10, 12, c, seed);
    const auto cand = neighbor_candidates(p, c, split);
    IndexSet prev_u;
    IndexSet prev_t;
    for (double eta : {0.0, 0.5, 1.0, 2.0, 4.0, kInf}) {
      const auto s = apply_thresholds(cand, eta, eta);
      CHECK(std::find(s.unit_neighbors.begin(), s.unit_neighbors.end(), c.unit) == s.unit_neighbors.end());
      CHECK(std::find(s.time_neighbors.begin(), s.time_neighbors.end(), c.time) == s.time_neighbors.end());
      CHECK(std::includes(s.unit_neighbors.begin(), s.unit_neighbors.end(), prev_u.begin(), prev_u.end()));
      CHECK(std::includes(s.time_neighbors.begin(), s.time_neighbors.end(), prev_t.begin(), prev_t.end()));
      if (split) {
        for (auto j : s.unit_neighbors) {
          CHECK(std::binary_search(split->unit_half_1.begin(), split->unit_half_1.end(), j));
        }
        for (auto t : s.time_neighbors) {
          CHECK(std::binary_search(split->time_half_2.begin(), split->time_half_2.end(), t));
        }
      }
      prev_u = s.unit_neighbors;
      prev_t = s.time_neighbors;
    }
  }
}

TEST_CASE("split distances never read outside their halves", "[neighbors][split]") {
  // Perturbing every cell outside a distance's read set must leave it
  // unchanged: unit distances read rows {i} + N1 at columns T1, time
  // distances read rows N2 at columns {t} + T2.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_panel(12, 14, 0.8, 500 + seed);
    const TargetCell c{seed % 12, (seed * 5) % 14};
    const auto split = make_split(12, 14, c, 1000 + seed);
    const auto base = neighbor_candidates(p, c, split);

    auto in = [](const IndexSet& s, std::size_t k) { return std::binary_search(s.begin(), s.end(), k); };
    RealMatrix y_unit = p.raw_outcomes();
    RealMatrix y_time = p.raw_outcomes();
    MaskMatrix m_unit = p.mask();
    MaskMatrix m_time = p.mask();
    for (std::size_t i = 0; i < 12; ++i) {
      for (std::size_t t = 0; t < 14; ++t) {
        const bool unit_reads = (i == c.unit || in(split.unit_half_1, i)) && in(split.time_half_1, t);
        const bool time_reads = in(split.unit_half_2, i) && (t == c.time || in(split.time_half_2, t));
        if (!unit_reads) {
          y_unit(i, t) = 1e6 + static_cast<double>(i * 14 + t);
          m_unit(i, t) = 1;
        }
        if (!time_reads) {
          y_time(i, t) = -1e6 - static_cast<double>(i * 14 + t);
          m_time(i, t) = static_cast<std::uint8_t>(1 - m_time(i, t));
        }
      }
    }
    const ObservationPanel pu(y_unit, m_unit);
    const ObservationPanel pt(y_time, m_time);
    CHECK(neighbor_candidates(pu, c, split).unit_distances == base.unit_distances);
    CHECK(neighbor_candidates(pt, c, split).time_distances == base.time_distances);
  }
}

TEST_CASE("neighbor sets serialize to JSON with null for infinity", "[neighbors]") {
  const ObservationPanel p(testing::matrix({{1, 2, 3}, {0, 0, 9}, {1, 2, 4}}),
                           testing::mask({{1, 1, 1}, {0, 0, 1}, {1, 1, 1}}));
  const auto s = select_neighbors(p, {0, 2}, 1.0, 1.0, make_split(3, 3, {0, 2}, 5));
  const auto j = to_json(s);
  CHECK(j.at("unit") == 0);
  CHECK(j.at("time") == 2);
  CHECK(j.at("split").at("seed") == 5);
  const auto unsplit = to_json(select_neighbors(p, {0, 2}, 1.0, 1.0));
  CHECK(unsplit.at("unit_distances").at("1").is_null());
  CHECK(unsplit.at("unit_distances").at("2") == 0.0);
  CHECK(unsplit.at("split").is_null());
}
