#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cityscale/error.hpp"
#include "cityscale/scaling.hpp"
#include "oracles.hpp"

using namespace cityscale;

namespace {

EventRecord visit(const std::string& user, double lat, double lon,
                  std::optional<std::string> declared = std::nullopt) {
  EventRecord e;
  e.user_id = user;
  e.lat = lat;
  e.lon = lon;
  e.origin_country = std::move(declared);
  e.dataset_tag = "photo";
  return e;
}

AttractivenessTable table_of(const std::vector<double>& population, const std::vector<double>& share) {
  AttractivenessTable t;
  for (std::size_t i = 0; i < population.size(); ++i) {
    t.rows.push_back({"R" + std::to_string(i), population[i], share[i], share[i]});
  }
  return t;
}

AttractivenessTable power_law_table(const std::vector<double>& population, double c, double b) {
  std::vector<double> share;
  for (double p : population) share.push_back(c * std::pow(p, b));
  return table_of(population, share);
}

double sum_res(const std::vector<ResidualScore>& scores) {
  double s = 0.0;
  for (const auto& r : scores) s += r.res;
  return s;
}

}  // namespace

TEST_CASE("attractiveness normalizes foreign counts to shares") {
  RegionLayer layer("L", {make_box_region("X", "L", 1000, {0, 0, 1, 1}),
                          make_box_region("Y", "L", 5000, {0, 2, 1, 3})});
  std::vector<EventRecord> events;
  for (int i = 0; i < 10; ++i) events.push_back(visit("fr", 0.5, 0.5));
  for (int i = 0; i < 30; ++i) events.push_back(visit("fr", 0.5, 2.5));
  for (int i = 0; i < 50; ++i) events.push_back(visit("es", 0.5, 2.5));
  OriginMap origins = {{"fr", "FR"}, {"es", "ES"}};
  auto assignment = assign_events(events, layer);
  ForeignCounts counts;
  auto table = compute_attractiveness(events, assignment.region_of, origins, "ES", layer, "photo", {},
                                      &counts);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].share == 0.25);
  CHECK(table.rows[1].share == 0.75);
  CHECK(table.total_activity == 40);
  CHECK(counts.resident == 50);
  CHECK(counts.foreign_in_regions == 40);
}

TEST_CASE("attractiveness with only resident activity is an empty-table error") {
  RegionLayer layer("L", {make_box_region("X", "L", 1000, {0, 0, 1, 1})});
  std::vector<EventRecord> events = {visit("es", 0.5, 0.5), visit("es", 0.2, 0.2)};
  auto assignment = assign_events(events, layer);
  CHECK_THROWS_AS(compute_attractiveness(events, assignment.region_of, {{"es", "ES"}}, "ES", layer, "d"),
                  EmptyTableError);
}

TEST_CASE("attractiveness matches a sequential recount on a mixed set") {
  RegionLayer layer("L", {make_box_region("A", "L", 100, {0, 0, 1, 1}),
                          make_box_region("B", "L", 200, {0, 2, 1, 3}),
                          make_box_region("C", "L", std::nullopt, {2, 0, 3, 1}),
                          make_box_region("D", "L", 400, {2, 2, 3, 3})});
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> coord(-0.5, 3.5);
  const char* users[] = {"u0", "u1", "u2", "u3", "u4", "u5"};
  OriginMap origins = {{"u0", "ES"}, {"u1", "FR"}, {"u2", std::nullopt},
                       {"u3", "DE"}, {"u4", "ES"}, {"u5", "GB"}};
  std::vector<EventRecord> events;
  for (int i = 0; i < 3000; ++i) {
    std::optional<std::string> declared;
    if (gen() % 10 == 0) declared = (gen() % 2) ? "IT" : "ES";
    events.push_back(visit(users[gen() % 6], coord(gen), coord(gen), declared));
  }
  // Hand recount: boxes tested directly, origins resolved inline.
  std::map<std::string, double> expected;
  double total = 0;
  for (const auto& e : events) {
    std::optional<std::string> origin = e.origin_country ? e.origin_country : origins.at(e.user_id);
    if (!origin || *origin == "ES") continue;
    auto in = [&](double lat0, double lon0) {
      return e.lat >= lat0 && e.lat <= lat0 + 1 && e.lon >= lon0 && e.lon <= lon0 + 1;
    };
    std::string id = in(0, 0) ? "A" : in(0, 2) ? "B" : in(2, 0) ? "C" : in(2, 2) ? "D" : "";
    if (id.empty() || id == "C") continue;
    expected[id] += 1;
    total += 1;
  }
  auto assignment = assign_events(events, layer);
  auto table = compute_attractiveness(events, assignment.region_of, origins, "ES", layer, "d");
  REQUIRE(table.rows.size() == 3);
  CHECK(table.missing_population == std::vector<std::string>{"C"});
  double share_sum = 0;
  for (const auto& row : table.rows) {
    CHECK(row.activity == expected[row.region_id]);
    CHECK(row.share == doctest::Approx(expected[row.region_id] / total).epsilon(1e-15));
    share_sum += row.share;
  }
  CHECK(std::fabs(share_sum - 1.0) <= 1e-9);
}

TEST_CASE("fit recovers an exact power law") {
  auto table = power_law_table({1e4, 1e5, 1e6}, 3e-9, 1.5);
  auto fit = fit_power_law(table);
  CHECK(std::fabs(fit.b - 1.5) <= 1e-12);
  CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.log_a == doctest::Approx(std::log10(3e-9)).epsilon(1e-12));
  CHECK(fit.n == 3);
  CHECK(fit.p_value < 1e-6);
}

TEST_CASE("exponent 1.5 means a 3x larger city is about 5x more attractive") {
  auto table = power_law_table({1e4, 3e4, 1e5, 3e5}, 1e-7, 1.5);
  auto fit = fit_power_law(table);
  const double ratio = std::pow(10.0, fit.predict_log10(3e5) - fit.predict_log10(1e5));
  CHECK(ratio == doctest::Approx(std::pow(3.0, 1.5)).epsilon(1e-9));
  CHECK(std::fabs(ratio - 5.0) / 5.0 < 0.05);
}

TEST_CASE("fit matches a brute-force SSE grid search on noisy 5-point instances") {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> log_p(2.0, 7.0);
  std::normal_distribution<double> noise(0.0, 0.15);
  for (int instance = 0; instance < 3; ++instance) {
    std::vector<double> p, a, xs, ys;
    for (int i = 0; i < 5; ++i) {
      const double x = log_p(gen);
      const double y = -8.0 + 1.4 * x + noise(gen);
      p.push_back(std::pow(10.0, x));
      a.push_back(std::pow(10.0, y));
      xs.push_back(std::log10(p.back()));
      ys.push_back(std::log10(a.back()));
    }
    auto fit = fit_power_law(p, a);
    auto grid = oracle::grid_search_fit(xs, ys, 0.0, 3.0, -12.0, 0.0, 1e-4);
    CHECK(std::fabs(fit.b - grid.slope) <= 2e-4);
    // The intercept absorbs the slope's grid error times the abscissa scale.
    CHECK(std::fabs(fit.log_a - grid.intercept) <= 2e-4 * 8.0);
  }
}

TEST_CASE("fit errors and zero-share exclusion") {
  CHECK_THROWS_AS(fit_power_law(power_law_table({1e3, 1e4}, 1e-6, 1.2)), InsufficientDataError);
  CHECK_THROWS_AS(fit_power_law(table_of({5e3, 5e3, 5e3}, {0.2, 0.3, 0.5})), DegenerateAbscissaError);
  auto table = power_law_table({1e3, 1e4, 1e5, 1e6}, 1e-8, 1.3);
  table.rows.push_back({"zero", 2e5, 0.0, 0.0});
  auto fit = fit_power_law(table);
  CHECK(fit.excluded_zero == 1);
  CHECK(fit.n == 4);
  CHECK(fit.b == doctest::Approx(1.3).epsilon(1e-12));
  table.rows.erase(table.rows.begin(), table.rows.begin() + 2);
  CHECK_THROWS_AS(fit_power_law(table), InsufficientDataError);
}

TEST_CASE("flat relationship has slope 0 and p-value 1") {
  auto fit = fit_power_law(table_of({1e3, 1e4, 1e5}, {0.2, 0.2, 0.2}));
  CHECK(fit.b == doctest::Approx(0.0));
  CHECK(fit.r2 == 1.0);
  CHECK(fit.p_value == 1.0);
}

TEST_CASE("log binning with even log spacing") {
  auto table = power_law_table({1e2, 1e3, 1e4, 1e5, 1e6}, 1e-9, 1.5);
  auto trend = log_bin(table, 5);
  REQUIRE(trend.bins.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(trend.bins[i].member_count == 1);
    CHECK(trend.bins[i].mean_share == table.rows[i].share);
    // Edges at 2, 2.8, 3.6, ... ; centre is the geometric midpoint.
    CHECK(std::log10(trend.bins[i].p_center) == doctest::Approx(2.4 + 0.8 * static_cast<double>(i)));
  }
  CHECK_THROWS_AS(log_bin(table, 0), InvalidArgument);
}

TEST_CASE("log binning: identical populations collapse into one bin") {
  auto trend = log_bin(table_of({300, 300, 300, 300}, {0.1, 0.2, 0.3, 0.4}), 5);
  REQUIRE(trend.bins.size() == 1);
  CHECK(trend.bins[0].member_count == 4);
  CHECK(trend.bins[0].mean_share == doctest::Approx(0.25));
  CHECK(trend.bins[0].p_center == doctest::Approx(300));
}

TEST_CASE("log binning: empty bins omitted, members sum to n, top edge inclusive") {
  auto table = table_of({10, 11, 12, 1000, 1e6}, {0.1, 0.1, 0.1, 0.3, 0.4});
  table.rows.push_back({"zero", 5e5, 0.0, 0.0});
  auto trend = log_bin(table, 5);
  std::size_t members = 0;
  for (const auto& bin : trend.bins) members += bin.member_count;
  CHECK(members == 5);
  CHECK(trend.bins.size() == 3);
  CHECK(trend.bins.front().member_count == 3);
  CHECK(trend.bins.back().member_count == 1);
  CHECK(trend.bins.back().hi_log10_p == doctest::Approx(6.0));
}

TEST_CASE("binned fit equals raw fit when every bin has the same layout") {
  // Bin centres are edge midpoints, so the first bin always holds a row on
  // its low edge and the last bin one on its high edge. Here bins 1..4 hold
  // offsets {0, a, a} and bin 5 holds {0, w}, with a chosen so every bin mean
  // sits at the same factor of its centre's power-law value.
  const double b = 1.5;
  const double w = 1.0;  // one decade per bin
  const double big = std::pow(10.0, b * w);
  const double a = std::log10((1.0 + 3.0 * big) / 4.0) / b;
  std::vector<double> pops;
  for (int bin = 0; bin < 4; ++bin) {
    const double lo = 2.0 + bin * w;
    for (double offset : {0.0, a, a}) pops.push_back(std::pow(10.0, lo + offset));
  }
  pops.push_back(std::pow(10.0, 6.0));
  pops.push_back(std::pow(10.0, 7.0));
  auto table = power_law_table(pops, 1e-12, b);
  auto trend = log_bin(table, 5);
  REQUIRE(trend.bins.size() == 5);
  CHECK(trend.bins.back().member_count == 2);
  CHECK(std::fabs(fit_binned(trend).b - fit_power_law(table).b) <= 1e-6);
}

TEST_CASE("residuals: hand-built 4-point instance") {
  // x = 1..4, y = (-3, -1.5, -1.2, 0.5): slope 1.08, intercept -4.
  auto table = table_of({10, 100, 1000, 10000}, {1e-3, std::pow(10.0, -1.5), std::pow(10.0, -1.2),
                                                 std::pow(10.0, 0.5)});
  auto fit = fit_power_law(table);
  CHECK(fit.b == doctest::Approx(1.08).epsilon(1e-12));
  CHECK(fit.log_a == doctest::Approx(-4.0).epsilon(1e-12));
  auto scores = residuals(table, fit);
  REQUIRE(scores.size() == 4);
  CHECK(scores[0].region_id == "R1");
  CHECK(scores[0].res == doctest::Approx(0.34).epsilon(1e-12));
  CHECK(scores[1].region_id == "R3");
  CHECK(scores[1].res == doctest::Approx(0.18).epsilon(1e-12));
  CHECK(scores[2].region_id == "R0");
  CHECK(scores[2].res == doctest::Approx(-0.08).epsilon(1e-12));
  CHECK(scores[3].region_id == "R2");
  CHECK(scores[3].res == doctest::Approx(-0.44).epsilon(1e-12));
  CHECK(std::fabs(sum_res(scores)) <= 1e-9);
}

TEST_CASE("residuals: points on the line score zero") {
  auto table = power_law_table({2e3, 7e4, 1e5, 4e6, 9e6}, 5e-11, 1.52);
  auto fit = fit_power_law(table);
  for (const auto& s : residuals(table, fit)) CHECK(std::fabs(s.res) <= 1e-12);
}

TEST_CASE("property: normalization invariance, zero-mean residuals, r2 == 1 iff collinear") {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> log_p(3.0, 7.0);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (int round = 0; round < 50; ++round) {
    std::vector<double> p, a, scaled;
    const int n = 5 + static_cast<int>(gen() % 40);
    for (int i = 0; i < n; ++i) {
      const double x = log_p(gen);
      p.push_back(std::pow(10.0, x));
      a.push_back(std::pow(10.0, -9.0 + 1.5 * x + noise(gen)));
      scaled.push_back(a.back() * 7.3);
    }
    auto base = fit_power_law(p, a);
    auto other = fit_power_law(p, scaled);
    CHECK(std::fabs(other.log_a - base.log_a - std::log10(7.3)) <= 1e-9);
    CHECK(std::fabs(other.b - base.b) <= 1e-9);
    CHECK(std::fabs(other.r2 - base.r2) <= 1e-9);
    CHECK(std::fabs(other.p_value - base.p_value) <= 1e-9);
    CHECK(std::fabs(other.stderr_b - base.stderr_b) <= 1e-9);
    auto t1 = table_of(p, a);
    auto t2 = table_of(p, scaled);
    auto r1 = residuals(t1, base);
    auto r2 = residuals(t2, other);
    REQUIRE(r1.size() == r2.size());
    for (std::size_t i = 0; i < r1.size(); ++i) {
      CHECK(r1[i].region_id == r2[i].region_id);
      CHECK(std::fabs(r1[i].res - r2[i].res) <= 1e-9);
    }
    CHECK(std::fabs(sum_res(r1)) <= 1e-9);
    CHECK(base.r2 < 1.0);
    CHECK(base.r2 >= 0.0);
    CHECK(base.p_value >= 0.0);
    CHECK(base.p_value <= 1.0);
  }
}

TEST_CASE("pearson: identities and textbook oracle") {
  std::vector<double> xs = {0.3, -1.2, 2.5, 0.0, 4.4, -0.7, 1.1, 3.3, -2.2, 0.9};
  std::vector<double> ys = {1.0, -0.5, 2.0, 0.4, 3.9, -1.1, 0.2, 2.8, -1.9, 1.7};
  std::vector<double> neg;
  for (double x : xs) neg.push_back(-x);
  CHECK(pearson(xs, xs) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(xs, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(std::fabs(pearson(xs, ys) - oracle::textbook_pearson(xs, ys)) <= 1e-12);
  std::vector<double> flat(10, 2.0);
  CHECK_THROWS_AS(pearson(xs, flat), UndefinedCorrelationError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1.0}, std::vector<double>{2.0}), InsufficientDataError);
}

TEST_CASE("correlate_residuals aligns by region id") {
  std::vector<ResidualScore> a = {{"A", 0.3}, {"B", -0.1}, {"C", 0.05}, {"D", -0.4}};
  std::vector<ResidualScore> shuffled = {{"D", -0.4}, {"B", -0.1}, {"A", 0.3}, {"C", 0.05}};
  auto same = correlate_residuals(a, shuffled);
  CHECK(same.r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(same.common == 4);
  std::vector<ResidualScore> partial = {{"A", 1.0}, {"B", 0.0}, {"C", 0.5}, {"Z", 9.0}};
  auto overlap = correlate_residuals(a, partial);
  CHECK(overlap.common == 3);
  CHECK(overlap.only_in_a == 1);
  CHECK(overlap.only_in_b == 1);
  std::vector<ResidualScore> disjoint = {{"X", 1.0}, {"Y", 2.0}};
  CHECK_THROWS_AS(correlate_residuals(a, disjoint), InsufficientDataError);
}

TEST_CASE("correlate_residuals recovers a latent correlation of 0.8") {
  std::mt19937_64 gen(123);
  std::normal_distribution<double> z(0.0, 1.0);
  const double rho = 0.8;
  const int n = 400;
  std::vector<ResidualScore> a, b;
  for (int i = 0; i < n; ++i) {
    const double x = z(gen);
    const double y = rho * x + std::sqrt(1 - rho * rho) * z(gen);
    a.push_back({"R" + std::to_string(i), x});
    b.push_back({"R" + std::to_string(i), y});
  }
  const double r = correlate_residuals(a, b).r;
  const double se = (1 - rho * rho) / std::sqrt(n - 1.0);
  CHECK(std::fabs(r - rho) <= 3 * se);
}

TEST_CASE("text outputs use 12 significant digits") {
  auto table = power_law_table({1e4, 1e5, 1e6}, 1e-9, 1.5);
  auto fit = fit_power_law(table);
  auto doc = nlohmann::json::parse(fit_to_json(fit, "bank", "LUZ"));
  for (const char* key : {"dataset", "layer", "b", "log_a", "r2", "p_value", "stderr_b", "n",
                          "excluded_zero_A"}) {
    CHECK(doc.contains(key));
  }
  CHECK(doc["b"].get<double>() == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(round12(1.0 / 3.0) == 0.333333333333);

  std::ostringstream out;
  write_residuals_csv(out, std::vector<ResidualScore>{{"A", 1.0 / 3.0}, {"B", -2.0}});
  CHECK(out.str() == "region_id,res\nA,0.333333333333\nB,-2\n");
  std::istringstream in(out.str());
  auto back = read_residuals_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[1].res == -2.0);
}

TEST_CASE("attractiveness table CSV reads back with recomputed shares") {
  auto table = make_table("d", "L", {{"A", 100, 10, 0}, {"B", 1000, 30, 0}});
  std::ostringstream out;
  write_table_csv(out, table);
  CHECK(out.str() == "region_id,population,activity,A\nA,100,10,0.25\nB,1000,30,0.75\n");
  std::istringstream in(out.str());
  auto back = read_table_csv(in, "d", "L");
  CHECK(back == table);
}
