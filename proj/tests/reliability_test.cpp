#include "simeval/reliability.hpp"

#include <vector>

#include "doctest.h"

using namespace simeval;

namespace {
const std::vector<double> v12345 = {1, 2, 3, 4, 5};

// span<const double> cannot bind a braced list directly; route literals
// through vectors.
using IL = std::initializer_list<double>;
double kendall_tau(IL a, IL b) {
  return simeval::kendall_tau(std::vector<double>(a), std::vector<double>(b));
}
double kendall_tau(const std::vector<double>& a, IL b) {
  return simeval::kendall_tau(a, std::vector<double>(b));
}
double spearman_rho(IL a, IL b) {
  return simeval::spearman_rho(std::vector<double>(a), std::vector<double>(b));
}
double spearman_rho(const std::vector<double>& a, IL b) {
  return simeval::spearman_rho(a, std::vector<double>(b));
}
double tau_ap(IL a, IL b) {
  return simeval::tau_ap(std::vector<double>(a), std::vector<double>(b));
}
double pairwise_concordance(IL a, IL b) {
  return simeval::pairwise_concordance(std::vector<double>(a),
                                       std::vector<double>(b));
}
}

TEST_CASE("kendall tau") {
  CHECK(kendall_tau(v12345, {1, 2, 3, 5, 4}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(kendall_tau({1, 2, 2, 4, 5}, {1, 3, 2, 4, 5}) ==
        doctest::Approx(0.9486832980505138).epsilon(1e-12));
  CHECK(kendall_tau({1, 2, 3}, {3, 1, 2}) ==
        doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
  CHECK(kendall_tau(v12345, v12345) == doctest::Approx(1.0));
  CHECK(kendall_tau(v12345, {5, 4, 3, 2, 1}) == doctest::Approx(-1.0));

  CHECK_THROWS_AS(kendall_tau({1, 1, 1}, {1, 2, 3}), Error);
  CHECK_THROWS_AS(kendall_tau({1, 2}, {1, 2, 3}), Error);
  CHECK_THROWS_AS(kendall_tau({1}, {2}), Error);
  try {
    kendall_tau({2, 2, 2}, {1, 2, 3});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConstantVector);
  }
}

TEST_CASE("spearman rho") {
  CHECK(spearman_rho(v12345, {1, 2, 3, 5, 4}) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(spearman_rho({1, 2, 2, 3}, {3, 2.5, 2.5, 1}) == doctest::Approx(-1.0));
  CHECK(spearman_rho(v12345, {10, 20, 30, 40, 50}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(spearman_rho({1, 1}, {1, 2}), Error);
}

TEST_CASE("top-weighted rank agreement") {
  CHECK(tau_ap({4, 3, 2, 1}, {4, 3, 2, 1}) == doctest::Approx(1.0));
  CHECK(tau_ap({4, 3, 2, 1}, {1, 2, 3, 4}) == doctest::Approx(-1.0));
  CHECK(tau_ap({4, 3, 2, 1}, {3, 4, 2, 1}) ==
        doctest::Approx(0.33333333333333326).epsilon(1e-12));
  CHECK(tau_ap({4, 3, 2, 1}, {4, 3, 1, 2}) ==
        doctest::Approx(0.7777777777777777).epsilon(1e-12));
  CHECK(tau_ap({1, 3, 2, 5, 4}, {2, 1, 3, 4, 5}) ==
        doctest::Approx(0.22916666666666663).epsilon(1e-12));
  CHECK(tau_ap({5, 1, 4, 2, 3}, {1, 2, 3, 4, 5}) ==
        doctest::Approx(-0.22916666666666669).epsilon(1e-12));
  // a swap near the top costs more than the same swap near the bottom
  const double top_swap = tau_ap({4, 3, 2, 1}, {3, 4, 2, 1});
  const double bottom_swap = tau_ap({4, 3, 2, 1}, {4, 3, 1, 2});
  CHECK(top_swap < bottom_swap);
  CHECK_THROWS_AS(tau_ap({1, 1, 1}, {1, 2, 3}), Error);
}

TEST_CASE("pairwise concordance tie handling") {
  CHECK(pairwise_concordance({1, 2, 2, 3}, {1, 2, 2, 3}) == doctest::Approx(1.0));
  CHECK(pairwise_concordance({1, 1, 2}, {1, 2, 3}) ==
        doctest::Approx(2.5 / 3.0).epsilon(1e-12));
  CHECK(pairwise_concordance({1, 2, 3}, {3, 2, 1}) == doctest::Approx(0.0));
  CHECK(pairwise_concordance({5, 5}, {1, 2}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(pairwise_concordance({1}, {2}), Error);
}

TEST_CASE("bootstrap over query columns") {
  Eigen::MatrixXd a(3, 6);
  a << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6,
       1.1, 1.2, 1.3, 1.4, 1.5, 1.6,
       2.1, 2.2, 2.3, 2.4, 2.5, 2.6;

  SUBCASE("perfect agreement pins the interval at one") {
    const BootstrapCi ci = bootstrap_ci(simeval::kendall_tau, a, a, 200, 7);
    CHECK(ci.lo == doctest::Approx(1.0));
    CHECK(ci.hi == doctest::Approx(1.0));
    CHECK(ci.dropped == 0);
    CHECK_FALSE(ci.unreliable);
  }

  SUBCASE("deterministic in the seed") {
    Eigen::MatrixXd b(3, 6);
    b << 0.3, 0.1, 0.5, 0.2, 0.6, 0.4,
         1.2, 1.6, 1.1, 1.5, 1.3, 1.4,
         2.4, 2.2, 2.6, 2.1, 2.5, 2.3;
    const BootstrapCi c1 = bootstrap_ci(simeval::kendall_tau, a, b, 300, 42);
    const BootstrapCi c2 = bootstrap_ci(simeval::kendall_tau, a, b, 300, 42);
    CHECK(c1.lo == c2.lo);
    CHECK(c1.hi == c2.hi);
    CHECK(c1.lo <= c1.hi);
  }

  SUBCASE("degenerate input") {
    const Eigen::MatrixXd flat = Eigen::MatrixXd::Zero(3, 6);
    CHECK_THROWS_AS(bootstrap_ci(simeval::kendall_tau, flat, a, 50, 0), Error);
    CHECK_THROWS_AS(bootstrap_ci(simeval::kendall_tau, a, Eigen::MatrixXd::Zero(2, 6), 50, 0),
                    Error);
    CHECK_THROWS_AS(bootstrap_ci(simeval::kendall_tau, a, a, 0, 0), Error);
  }
}

TEST_CASE("reliability weighting rewards agreement") {
  const std::vector<std::string> systems = {"s1", "s2", "s3", "s4"};
  const std::map<std::string, std::vector<double>> clones = {
      {"t1", {0.9, 0.7, 0.5, 0.1}},
      {"t2", {0.85, 0.75, 0.45, 0.2}},
      {"t3", {0.95, 0.6, 0.55, 0.15}},
  };

  const RateResult res = rate_aggregate(clones, systems);
  CHECK(res.converged);
  CHECK(res.iterations == 1);
  for (const auto& [id, w] : res.weights) CHECK(w == doctest::Approx(1.0));
  REQUIRE(res.consensus_ranking.size() == 4);
  CHECK(res.consensus_ranking[0] == "s1");
  CHECK(res.consensus_ranking[3] == "s4");
  CHECK(res.constant_testers.empty());
}

TEST_CASE("adversarial tester is pinned to the weight floor") {
  const std::vector<std::string> systems = {"s1", "s2", "s3", "s4"};
  const std::map<std::string, std::vector<double>> testers = {
      {"good1", {1.0, 0.8, 0.5, 0.0}},
      {"good2", {1.0, 0.8, 0.5, 0.0}},
      {"adv", {0.0, 0.5, 0.8, 1.0}},
  };

  const RateResult res = rate_aggregate(testers, systems);
  CHECK(res.converged);
  CHECK(res.iterations <= 3);
  CHECK(res.weights.at("adv") == doctest::Approx(0.01));
  CHECK(res.weights.at("good1") == doctest::Approx(1.0));
  CHECK(res.weights.at("adv") < 0.25 * res.weights.at("good1"));
  CHECK(res.consensus_ranking[0] == "s1");
}

TEST_CASE("constant testers are flagged and floored") {
  const std::vector<std::string> systems = {"s1", "s2", "s3"};
  const std::map<std::string, std::vector<double>> testers = {
      {"flat", {0.4, 0.4, 0.4}},
      {"ok1", {0.9, 0.5, 0.1}},
      {"ok2", {0.8, 0.6, 0.2}},
  };
  const RateResult res = rate_aggregate(testers, systems);
  REQUIRE(res.constant_testers == std::vector<std::string>{"flat"});
  CHECK(res.weights.at("flat") == doctest::Approx(0.01));
  CHECK(res.consensus_ranking[0] == "s1");
}

TEST_CASE("aggregation input validation") {
  const std::map<std::string, std::vector<double>> one = {{"t", {1.0, 2.0}}};
  CHECK_THROWS_AS(rate_aggregate(one, {"a"}), Error);
  CHECK_THROWS_AS(rate_aggregate({}, {"a", "b"}), Error);
  CHECK_THROWS_AS(rate_aggregate({{"t", {1.0}}}, {"a", "b"}), Error);
  RateConfig bad;
  bad.max_iter = 0;
  CHECK_THROWS_AS(rate_aggregate(one, {"a", "b"}, bad), Error);
}

TEST_CASE("leave-one-out flags fragile winners") {
  const std::vector<std::string> systems = {"x", "y"};

  SUBCASE("split panel is fragile") {
    const std::map<std::string, std::vector<double>> split = {
        {"a1", {1.0, 0.0}},
        {"a2", {1.0, 0.0}},
        {"b1", {0.0, 1.0}},
        {"b2", {0.0, 1.0}},
    };
    const SensitivityResult sens = leave_one_out(split, systems);
    CHECK(sens.full_top_system == "x");  // dead tie broken by id
    CHECK(sens.entries.size() == 4);
    CHECK(sens.fragile);
    for (const SensitivityEntry& e : sens.entries) {
      if (e.dropped_tester == "a1" || e.dropped_tester == "a2") {
        CHECK(e.top_system == "y");
        CHECK(e.top_changed);
      } else {
        CHECK(e.top_system == "x");
        CHECK_FALSE(e.top_changed);
      }
    }
  }

  SUBCASE("clone panel is stable") {
    const std::map<std::string, std::vector<double>> clones = {
        {"t1", {0.9, 0.1}}, {"t2", {0.8, 0.2}}, {"t3", {0.7, 0.3}}};
    const SensitivityResult sens = leave_one_out(clones, systems);
    CHECK(sens.full_top_system == "x");
    CHECK_FALSE(sens.fragile);
  }

  SUBCASE("needs three testers") {
    const std::map<std::string, std::vector<double>> two = {
        {"t1", {0.9, 0.1}}, {"t2", {0.8, 0.2}}};
    CHECK_THROWS_AS(leave_one_out(two, systems), Error);
  }
}
