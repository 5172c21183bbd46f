#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "icr/tensor.hpp"
#include "support.hpp"

using namespace icr;
using testsup::make_vars;
using testsup::scope_of;

namespace {

// Example-1 style fixture: 3 binary variables, joint (1,3,4,2,3,3,3,1)/20
// laid out with x1 fastest.
Distribution example1_joint() {
  const auto vars = make_vars({2, 2, 2});
  std::vector<double> v{1, 3, 4, 2, 3, 3, 3, 1};
  for (auto& x : v) x /= 20.0;
  return Distribution::joint(Scope(vars), std::move(v));
}

}  // namespace

TEST_CASE("normalize raw weights into probabilities") {
  const auto vars = make_vars({2});
  SUBCASE("symmetric weights") {
    auto d = normalize(Scope(vars), Scope{}, {2, 2});
    CHECK(d.values()[0] == 0.5);
    CHECK(d.values()[1] == 0.5);
  }
  SUBCASE("proportionality is forced") {
    auto d = normalize(Scope(vars), Scope{}, {1, 3});
    CHECK(d.values()[0] == 0.25);
    CHECK(d.values()[1] == 0.75);
  }
  SUBCASE("known eight-cell table") {
    const auto v3 = make_vars({2, 2, 2});
    auto d = normalize(Scope(v3), Scope{}, {1, 3, 4, 2, 3, 3, 3, 1});
    CHECK(d.values()[0] == doctest::Approx(1.0 / 20).epsilon(1e-15));
    CHECK(d.values()[2] == doctest::Approx(4.0 / 20).epsilon(1e-15));
    CHECK(d.values()[7] == doctest::Approx(1.0 / 20).epsilon(1e-15));
  }
  SUBCASE("per-slice scaling for conditionals") {
    const auto v2 = make_vars({2, 2});
    auto d = normalize(scope_of(v2, {"x1"}), scope_of(v2, {"x2"}), {1, 1, 1, 3});
    CHECK(d.values()[0] == 0.5);
    CHECK(d.values()[2] == 0.25);
    CHECK(d.values()[3] == 0.75);
  }
  SUBCASE("zero-mass slice refuses") {
    const auto v2 = make_vars({2, 2});
    CHECK_THROWS_AS(normalize(scope_of(v2, {"x1"}), scope_of(v2, {"x2"}), {1, 1, 0, 0}),
                    AllZeroSliceError);
  }
  SUBCASE("re-normalizing a distribution is the identity") {
    auto d = Distribution::joint(Scope(vars), {0.25, 0.75});
    auto n = normalize(d);
    CHECK(n.values()[0] == 0.25);
    CHECK(n.values()[1] == 0.75);
  }
}

TEST_CASE("construction tolerance tiers") {
  const auto vars = make_vars({2});
  // within 1e-12: accepted verbatim
  auto exact = Distribution::joint(Scope(vars), {0.5, 0.5});
  CHECK_FALSE(exact.was_renormalized());
  // off by ~1e-7: renormalized with the flag set
  auto drift = Distribution::joint(Scope(vars), {0.5, 0.5 + 1e-7});
  CHECK(drift.was_renormalized());
  CHECK(drift.values()[0] + drift.values()[1] == doctest::Approx(1.0).epsilon(1e-14));
  // off by more than 1e-6: rejected
  CHECK_THROWS_AS(Distribution::joint(Scope(vars), {0.5, 0.6}), ValidationError);
  // all-zero slice
  CHECK_THROWS_AS(
      Distribution::conditional(scope_of(make_vars({2, 2}), {"x1"}),
                                scope_of(make_vars({2, 2}), {"x2"}), {0.5, 0.5, 0.0, 0.0}),
      AllZeroSliceError);
  // negative and non-finite values
  CHECK_THROWS_AS(Distribution::joint(Scope(vars), {1.5, -0.5}), ValidationError);
  CHECK_THROWS_AS(Distribution::joint(Scope(vars), {0.5, std::nan("")}), ValidationError);
}

TEST_CASE("example joint normalizes to the known table") {
  auto pi = example1_joint();
  CHECK(pi.values()[0] == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(pi.values()[2] == doctest::Approx(0.2).epsilon(1e-15));
  double sum = 0;
  for (double v : pi.values()) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("marginalize sums out the right axes") {
  auto pi = example1_joint();
  const auto vars = make_vars({2, 2, 2});

  SUBCASE("x3 marginal is uniform") {
    auto f3 = marginalize(pi, scope_of(vars, {"x3"}));
    REQUIRE(f3.values().size() == 2);
    CHECK(f3.values()[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(f3.values()[1] == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("pair marginal matches direct summation") {
    auto m12 = marginalize(pi, scope_of(vars, {"x1", "x2"}));
    REQUIRE(m12.values().size() == 4);
    CHECK(m12.values()[0] == doctest::Approx(4.0 / 20).epsilon(1e-14));
    CHECK(m12.values()[1] == doctest::Approx(6.0 / 20).epsilon(1e-14));
    CHECK(m12.values()[2] == doctest::Approx(7.0 / 20).epsilon(1e-14));
    CHECK(m12.values()[3] == doctest::Approx(3.0 / 20).epsilon(1e-14));
  }
  SUBCASE("uniform stays uniform over any pair") {
    auto u = uniform(Scope(vars));
    auto m = marginalize(u, scope_of(vars, {"x1", "x3"}));
    for (double v : m.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
  }
  SUBCASE("keep outside scope is a scope error") {
    const auto other = make_vars({2, 2, 2, 2});
    CHECK_THROWS_AS(marginalize(pi, scope_of(other, {"x4"})), ScopeError);
  }
  SUBCASE("agrees with the config-map oracle on random joints") {
    std::mt19937_64 gen(7);
    const auto vars5 = make_vars({2, 3, 2});
    for (int rep = 0; rep < 20; ++rep) {
      auto j = testsup::random_joint(Scope(vars5), gen);
      auto keep = scope_of(vars5, {"x1", "x3"});
      auto got = marginalize(j, keep);
      auto want = testsup::oracle_marginal(j, keep);
      for (const auto& c : testsup::enumerate_configs(keep)) {
        std::vector<int> key{c.at("x1"), c.at("x3")};
        CHECK(testsup::value_at(got, c) == doctest::Approx(want[key]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("condition extracts the conditional table") {
  auto pi = example1_joint();
  const auto vars = make_vars({2, 2, 2});

  SUBCASE("f1|23 from the joint") {
    auto f = condition(pi, scope_of(vars, {"x2", "x3"}));
    CHECK(f.scope().names() == std::vector<std::string>{"x1"});
    CHECK(f.given().names() == std::vector<std::string>{"x2", "x3"});
    // value 1/4 at x1=0,x2=0,x3=0
    CHECK(f.values()[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(f.values()[1] == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(f.values()[2] == doctest::Approx(2.0 / 3).epsilon(1e-14));
  }
  SUBCASE("uniform joint gives uniform conditional") {
    auto u = uniform(Scope(make_vars({2, 2})));
    auto c = condition(u, scope_of(make_vars({2, 2}), {"x2"}));
    for (double v : c.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("sticky joint yields the expected f2|1 slice") {
    const auto v2 = make_vars({2, 3});
    std::vector<double> pv{200000, 2, 500000, 5, 7, 1};
    for (auto& x : pv) x /= 700015.0;
    auto sticky = Distribution::joint(Scope(v2), std::move(pv));
    auto f21 = condition(sticky, scope_of(v2, {"x1"}));
    // scope x2 (fastest), given x1: f(x2=0|x1=0) = 200000/700007
    CHECK(f21.values()[0] == doctest::Approx(200000.0 / 700007).epsilon(1e-14));
    CHECK(f21.values()[1] == doctest::Approx(500000.0 / 700007).epsilon(1e-14));
    CHECK(f21.values()[2] == doctest::Approx(7.0 / 700007).epsilon(1e-14));
    CHECK(f21.values()[3] == doctest::Approx(2.0 / 8).epsilon(1e-14));
  }
  SUBCASE("zero-mass conditioning configuration") {
    const auto v2 = make_vars({2, 2});
    auto d = Distribution::joint(Scope(v2), {0.5, 0.5, 0.0, 0.0});
    CHECK_THROWS_AS(condition(d, scope_of(v2, {"x2"})), AllZeroSliceError);
  }
}

TEST_CASE("compose rebuilds joints from conditional and marginal") {
  auto pi = example1_joint();
  const auto vars = make_vars({2, 2, 2});

  SUBCASE("f1|23 * pi23 recovers the joint") {
    auto f = condition(pi, scope_of(vars, {"x2", "x3"}));
    auto m = marginalize(pi, scope_of(vars, {"x2", "x3"}));
    auto back = compose(f, m);
    CHECK(total_variation(back, pi) < 1e-14);
  }
  SUBCASE("f2|13 * pi13 recovers the joint with axis reordering") {
    auto f = condition(pi, scope_of(vars, {"x1", "x3"}));
    auto m = marginalize(pi, scope_of(vars, {"x1", "x3"}));
    auto back = compose(f, m);
    CHECK(back.scope().names() == std::vector<std::string>{"x1", "x2", "x3"});
    CHECK(total_variation(back, pi) < 1e-14);
  }
  SUBCASE("composing with a uniform marginal returns that marginal") {
    std::mt19937_64 gen(3);
    const auto v2 = make_vars({2, 2});
    auto f = testsup::random_conditional(scope_of(v2, {"x1"}), scope_of(v2, {"x2"}), gen);
    auto u = uniform(scope_of(v2, {"x2"}));
    auto j = compose(f, u);
    auto m2 = marginalize(j, scope_of(v2, {"x2"}));
    for (double v : m2.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("scope mismatch is an error") {
    auto f = condition(pi, scope_of(vars, {"x2", "x3"}));
    auto wrong = marginalize(pi, scope_of(vars, {"x2"}));
    CHECK_THROWS_AS(compose(f, wrong), ScopeError);
  }
}

TEST_CASE("kl report directions, zeros and total variation") {
  const auto vars = make_vars({2});
  auto p = Distribution::joint(Scope(vars), {0.5, 0.5});
  auto q = Distribution::joint(Scope(vars), {0.25, 0.75});

  SUBCASE("identity is exactly zero") {
    auto r = kl(p, p);
    CHECK(r.kl_forward == 0.0);
    CHECK(r.kl_backward == 0.0);
    CHECK(r.symmetric == 0.0);
    CHECK(r.total_variation == 0.0);
  }
  SUBCASE("closed-form binary value") {
    auto r = kl(p, q);
    const double expect = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
    CHECK(r.kl_forward == doctest::Approx(expect).epsilon(1e-12));
    CHECK(r.kl_forward == doctest::Approx(0.14384103622589045).epsilon(1e-12));
    CHECK(r.total_variation == doctest::Approx(0.25).epsilon(1e-14));
    // cross-check against the config-map oracle
    CHECK(r.kl_forward == doctest::Approx(testsup::oracle_kl(p, q)).epsilon(1e-13));
  }
  SUBCASE("support mismatch flags infinity instead of throwing") {
    auto z = Distribution::joint(Scope(vars), {1.0, 0.0});
    auto r = kl(p, z);
    CHECK(r.forward_infinite);
    CHECK(std::isinf(r.kl_forward));
    CHECK_FALSE(std::isinf(r.kl_backward));
  }
  SUBCASE("scope mismatch throws") {
    auto other = Distribution::joint(Scope(make_vars({2, 2})), {0.25, 0.25, 0.25, 0.25});
    CHECK_THROWS_AS(kl(p, other), ScopeError);
  }
}

TEST_CASE("pythagoras identity for conditional replacement") {
  std::mt19937_64 gen(41);
  const auto vars = make_vars({3, 4});
  const Scope s1 = scope_of(vars, {"x1"});
  const Scope s2 = scope_of(vars, {"x2"});
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    auto q = testsup::random_joint(Scope(vars), gen, 0.01);
    auto f = testsup::random_conditional(s1, s2, gen, 0.01);
    auto tau2 = testsup::random_joint(s2, gen, 0.01);
    auto tau = compose(f, tau2);
    auto mid = compose(f, marginalize(q, s2));
    const double lhs = kl(q, tau).kl_forward;
    const double rhs = kl(q, mid).kl_forward + kl(mid, tau).kl_forward;
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("marginalize-compose round trip returns the marginal exactly") {
  std::mt19937_64 gen(42);
  const auto vars = make_vars({2, 3, 2});
  const Scope target = scope_of(vars, {"x1"});
  const Scope given = scope_of(vars, {"x2", "x3"});
  for (int rep = 0; rep < 50; ++rep) {
    auto c = testsup::random_conditional(target, given, gen);
    auto m = testsup::random_joint(given, gen);
    auto j = compose(c, m);
    auto back = marginalize(j, given);
    const auto map = detail::aligned_strides(m, back);
    for (std::size_t i = 0; i < m.values().size(); ++i)
      CHECK(m.values()[i] == doctest::Approx(back.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("total variation obeys the pinsker-style bound") {
  std::mt19937_64 gen(43);
  const auto vars = make_vars({3, 3});
  for (int rep = 0; rep < 200; ++rep) {
    auto p = testsup::random_joint(Scope(vars), gen, 0.01);
    auto q = testsup::random_joint(Scope(vars), gen, 0.01);
    auto r = kl(p, q);
    CHECK(r.total_variation <= std::sqrt(r.kl_forward / 2.0) + 1e-12);
  }
}

TEST_CASE("conditional kl sums slices and tv averages them") {
  const auto vars = make_vars({2, 2});
  auto a = Distribution::conditional(scope_of(vars, {"x1"}), scope_of(vars, {"x2"}),
                                     {0.5, 0.5, 0.5, 0.5});
  auto b = Distribution::conditional(scope_of(vars, {"x1"}), scope_of(vars, {"x2"}),
                                     {0.25, 0.75, 0.25, 0.75});
  auto r = kl(a, b);
  const double per_slice = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  CHECK(r.kl_forward == doctest::Approx(2 * per_slice).epsilon(1e-12));
  CHECK(r.total_variation == doctest::Approx(0.25).epsilon(1e-14));  // stays in [0,1]
}

TEST_CASE("scope invariants") {
  auto vars = make_vars({2, 2});
  CHECK_THROWS_AS(Scope({vars[0], vars[0]}), ValidationError);
  CHECK_THROWS_AS(Scope({icr::Variable{"y", 1, 0}}), ValidationError);
  // canonical order follows ordinals regardless of listing order
  Scope s({vars[1], vars[0]});
  CHECK(s.names() == std::vector<std::string>{"x1", "x2"});
}
