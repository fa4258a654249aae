#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fd.hpp"
#include "fedrec/selection.hpp"

using namespace fedrec;

namespace {

SelectionState state_of(std::vector<double> v) { return SelectionState{std::move(v)}; }

SelectionState random_state(std::size_t n, Rng& rng) {
  std::lognormal_distribution<double> d(3.0, 1.0);
  SelectionState s;
  for (std::size_t i = 0; i < n; ++i) s.losses.push_back(d(rng));
  return s;
}

void check_distinct(const SelectionAction& a, std::size_t k, std::size_t n) {
  CHECK(a.chosen.size() == k);
  std::set<UserId> s(a.chosen.begin(), a.chosen.end());
  CHECK(s.size() == k);
  CHECK(*s.rbegin() < n);
}

AgentParams small_agent(std::size_t n, Rng& rng, double entropy = 0.01, double lr = 1e-3) {
  AgentConfig cfg;
  cfg.actor_hidden = 8;
  cfg.critic_hidden = 8;
  cfg.entropy_weight = entropy;
  cfg.actor_lr = lr;
  cfg.critic_lr = lr;
  return AgentParams::xavier(n, cfg, rng);
}

}  // namespace

TEST_CASE("state imputation and normalization") {
  std::vector<std::optional<double>> r = {1.0, std::nullopt, 3.0};
  CHECK(impute_state(r).losses == std::vector<double>{1.0, 2.0, 3.0});
  std::vector<std::optional<double>> none(3);
  CHECK(impute_state(none).losses == std::vector<double>(3, 0.0));
  const Vec z = normalize_state(state_of({1, 2, 3, 4}));
  CHECK(std::abs(z.mean()) < 1e-15);
  CHECK(std::sqrt(z.squaredNorm() / 4) == doctest::Approx(1.0));
  CHECK(normalize_state(state_of({5, 5, 5})).isZero());
}

TEST_CASE("pow-d selection") {
  Rng rng(1);
  const auto s = state_of({5, 1, 9, 3});
  const auto a = select_powd(s, 4, 2, rng);
  CHECK(a.chosen == std::vector<UserId>{2, 0});
  const auto eq = select_powd(state_of({1, 1, 1, 1, 1, 1}), 6, 3, rng);
  CHECK(eq.chosen == std::vector<UserId>{0, 1, 2});
  // with a partial pool, ties go to the lowest ids of the pool
  Rng r1(9), r2(9);
  auto pool = select_random(6, 4, r1).chosen;
  std::sort(pool.begin(), pool.end());
  const auto part = select_powd(state_of({1, 1, 1, 1, 1, 1}), 4, 2, r2);
  CHECK(part.chosen == std::vector<UserId>{pool[0], pool[1]});
  CHECK_THROWS_AS(select_powd(s, 5, 2, rng), ConfigError);
}

TEST_CASE("kmeans selection") {
  Rng a(3), b(3);
  CHECK(select_kmeans(Mat::Random(2, 20), 1, 5, a).chosen == select_random(20, 5, b).chosen);

  Mat blobs(1, 20);
  for (int i = 0; i < 10; ++i) {
    blobs(0, i) = -10.0 + 0.01 * i;
    blobs(0, 10 + i) = 10.0 + 0.01 * i;
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto pick = select_kmeans(blobs, 2, 2, rng);
    REQUIRE(pick.chosen.size() == 2);
    CHECK((pick.chosen[0] < 10) != (pick.chosen[1] < 10));
  }
  Rng c(5), d(5);
  const Mat f = Mat::Random(2, 30);
  const auto ka = kmeans(f, 4, c), kb = kmeans(f, 4, d);
  CHECK(ka.assignment == kb.assignment);
  CHECK(ka.iterations <= 50);
  Rng e(6), g(6);
  CHECK(select_kmeans(f, 4, 7, e).chosen == select_kmeans(f, 4, 7, g).chosen);
}

TEST_CASE("kmeans refills an emptied cluster") {
  Mat pts(1, 5);
  pts << 0.0, 0.0, 0.0, 0.0, 100.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto km = kmeans(pts, 2, rng);
    std::set<int> used(km.assignment.begin(), km.assignment.end());
    CHECK(used.size() == 2);
  }
}

TEST_CASE("every selector returns K distinct ids") {
  Rng rng(11);
  const std::size_t n = 40;
  std::vector<std::size_t> counts(n);
  for (auto& c : counts) c = 5 + rng() % 50;
  for (SelectorKind kind : {SelectorKind::random, SelectorKind::powd, SelectorKind::kmeans, SelectorKind::proxyrl}) {
    SelectorConfig cfg;
    cfg.kind = kind;
    cfg.agent.actor_hidden = 8;
    cfg.agent.critic_hidden = 8;
    auto sel = make_selector(cfg, n, rng);
    CHECK(sel->kind() == kind);
    for (std::size_t k : {std::size_t{1}, std::size_t{7}, n}) {
      const auto st = random_state(n, rng);
      check_distinct(sel->select({st, counts, k}, rng), k, n);
    }
  }
  CHECK(parse_selector("powd") == SelectorKind::powd);
  CHECK(selector_name(SelectorKind::proxyrl) == "proxyrl");
  CHECK_THROWS_AS(parse_selector("bandit"), ConfigError);
}

TEST_CASE("policy head") {
  Rng rng(2);
  AgentParams a = small_agent(6, rng);
  a.actor = a.actor.zeros_like();
  const Vec p = actor_policy(a, state_of({1, 2, 3, 4, 5, 6}));
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(p(i) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

  const Vec logits = Vec::Random(9) * 5.0;
  const Vec s1 = softmax(logits), s2 = softmax((logits.array() + 123.0).matrix());
  CHECK((s1 - s2).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(s1.sum() - 1.0) < 1e-12);
  double z = 0.0;
  for (Eigen::Index i = 0; i < 9; ++i) z += std::exp(logits(i));
  for (Eigen::Index i = 0; i < 9; ++i) CHECK(std::abs(s1(i) - std::exp(logits(i)) / z) < 1e-12);
  Eigen::Index am_p, am_l;
  s1.maxCoeff(&am_p);
  logits.maxCoeff(&am_l);
  CHECK(am_p == am_l);

  Vec bad = logits;
  bad(0) = std::nan("");
  CHECK_THROWS_AS(softmax(bad), NumericError);
}

TEST_CASE("subset sampling hand cases") {
  Rng rng(4);
  Vec onehot = Vec::Zero(5);
  onehot(3) = 1.0;
  const auto a = sample_subset(onehot, 1, rng);
  CHECK(a.chosen == std::vector<UserId>{3});
  CHECK(*a.log_prob == 0.0);
  CHECK_THROWS_AS(sample_subset(onehot, 2, rng), ConfigError);

  const Vec uni = Vec::Constant(4, 0.25);
  const auto all = sample_subset(uni, 4, rng);
  CHECK(*all.log_prob == doctest::Approx(-std::log(24.0)).epsilon(1e-14));
  CHECK(subset_log_prob(uni, all.chosen) == *all.log_prob);

  // each step is effectively deterministic: the draws follow the probability order
  Vec steep(5);
  steep << 1e-200, 1.0, 1e-100, 1e-300, 1e-50;
  for (int rep = 0; rep < 5; ++rep) {
    CHECK(sample_subset(steep, 3, rng).chosen == std::vector<UserId>{1, 4, 2});
  }
}

TEST_CASE("subset inclusion frequencies match enumeration") {
  Vec p(5);
  p << 0.1, 0.3, 0.2, 0.25, 0.15;
  std::vector<double> incl(5, 0.0);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      if (i == j) continue;
      const double pr = p(i) * p(j) / (1.0 - p(i));
      incl[i] += pr;
      incl[j] += pr;
    }
  Rng rng(77);
  const int trials = 100000;
  std::vector<long> hits(5, 0);
  for (int t = 0; t < trials; ++t)
    for (UserId c : sample_subset(p, 2, rng).chosen) ++hits[c];
  for (int i = 0; i < 5; ++i) {
    const double sd = std::sqrt(trials * incl[i] * (1 - incl[i]));
    CHECK(std::abs(hits[i] - trials * incl[i]) < 3 * sd);
  }
}

TEST_CASE("agent gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    AgentParams a = small_agent(6, rng, 0.05);
    a.actor.b1.setRandom();
    a.critic.b1.setRandom();
    Transition tr;
    tr.state = random_state(6, rng);
    tr.next_state = random_state(6, rng);
    tr.action = sample_subset(actor_policy(a, tr.state), 3, rng);
    tr.reward = 0.3;
    const auto g = agent_gradients(a, tr);
    const double adv = g.advantage;
    const double target = td_target(a, tr);
    CHECK(critic_loss(a, tr, target) == doctest::Approx(g.critic_loss));
    CHECK(actor_loss(a, tr, adv) == doctest::Approx(g.actor_loss));
    double worst = 0.0;
    auto visit = [&](Mlp& params, const Mlp& grads, const std::function<double()>& f) {
      params.for_each_tensor([&](const std::string& name, double* p, Eigen::Index n) {
        const double* gp = name == "W1" ? grads.W1.data() : name == "b1" ? grads.b1.data()
                         : name == "W2" ? grads.W2.data() : grads.b2.data();
        worst = std::max(worst, fdcheck::check(p, gp, n, f).max_rel);
      });
    };
    visit(a.actor, g.actor, [&] { return actor_loss(a, tr, adv); });
    visit(a.critic, g.critic, [&] { return critic_loss(a, tr, target); });
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("agent update properties") {
  Rng rng(21);
  SUBCASE("zero advantage and no entropy leaves the actor") {
    AgentParams a = small_agent(5, rng, 0.0);
    a.gamma = 0.0;
    Transition tr{random_state(5, rng), {}, 0.0, {}, true};
    tr.action = sample_subset(actor_policy(a, tr.state), 2, rng);
    tr.reward = critic_value(a, tr.state);
    const Mlp before = a.actor;
    const auto l = agent_update(a, tr);
    CHECK(l.advantage == 0.0);
    CHECK(a.actor == before);
  }
  SUBCASE("zero learning rates are the identity") {
    AgentParams a = small_agent(5, rng, 0.01, 0.0);
    const AgentParams before = a;
    Transition tr{random_state(5, rng), {}, 1.0, random_state(5, rng), false};
    tr.action = sample_subset(actor_policy(a, tr.state), 2, rng);
    agent_update(a, tr);
    CHECK(a.actor == before.actor);
    CHECK(a.critic == before.critic);
  }
  SUBCASE("critic learns a constant reward") {
    AgentParams a = small_agent(5, rng, 0.01, 1e-2);
    a.gamma = 0.0;
    Transition tr{random_state(5, rng), {}, 0.7, {}, false};
    tr.next_state = tr.state;
    tr.action = sample_subset(actor_policy(a, tr.state), 2, rng);
    for (int i = 0; i < 500; ++i) agent_update(a, tr);
    CHECK(std::abs(critic_value(a, tr.state) - 0.7) < 0.01);
  }
  SUBCASE("positive advantage raises the subset probability") {
    AgentParams a = small_agent(8, rng, 0.0);
    a.gamma = 0.0;
    Transition tr{random_state(8, rng), {}, 0.0, {}, true};
    tr.action = sample_subset(actor_policy(a, tr.state), 3, rng);
    tr.reward = critic_value(a, tr.state) + 1.0;
    const double before = subset_log_prob(actor_policy(a, tr.state), tr.action.chosen);
    const auto l = agent_update(a, tr);
    CHECK(l.advantage > 0.0);
    CHECK(subset_log_prob(actor_policy(a, tr.state), tr.action.chosen) > before);
  }
  SUBCASE("non-finite reward is rejected") {
    AgentParams a = small_agent(4, rng);
    Transition tr{random_state(4, rng), {{0}, 0.0}, std::nan(""), random_state(4, rng), false};
    CHECK_THROWS_AS(agent_update(a, tr), NumericError);
  }
}

TEST_CASE("proxyrl selector learns through observe") {
  Rng rng(5);
  SelectorConfig cfg;
  cfg.agent.actor_hidden = 8;
  cfg.agent.critic_hidden = 8;
  auto sel = make_selector(cfg, 10, rng);
  CHECK(sel->learns());
  const auto st = random_state(10, rng);
  std::vector<std::size_t> counts(10, 3);
  const auto act = sel->select({st, counts, 3}, rng);
  REQUIRE(act.log_prob.has_value());
  const auto l = sel->observe(Transition{st, act, 0.5, st, false});
  CHECK(l.has_value());
  auto rnd = make_selector(SelectorConfig{SelectorKind::random}, 10, rng);
  CHECK_FALSE(rnd->observe(Transition{st, act, 0.5, st, false}).has_value());
}
