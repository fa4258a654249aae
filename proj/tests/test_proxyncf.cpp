#include <doctest.h>

#include <cmath>
#include <set>

#include "fd.hpp"
#include "fedrec/proxyncf.hpp"

using namespace fedrec;

namespace {

struct Fixture {
  ProxyNcfParams params;
  Vec user;
  ItemTable items;
  std::vector<Triplet> triplets;
};

Fixture random_fixture(std::uint64_t seed, int d = 4, int h = 6, int n_items = 12, int n_trip = 5) {
  Rng rng(seed);
  Fixture f;
  f.params = ProxyNcfParams::xavier(d, h, rng);
  f.params.ncf.b1.setRandom();
  f.params.proxy.b1.setRandom();
  f.params.ncf.b1 *= 0.3;
  f.params.proxy.b1 *= 0.3;
  f.user = Vec::Random(d);
  f.items = ItemTable::Random(n_items, d);
  std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(n_items - 1));
  for (int t = 0; t < n_trip; ++t) {
    ItemId p = pick(rng), n = pick(rng);
    while (n == p) n = pick(rng);
    f.triplets.push_back({0, p, n});
  }
  return f;
}

double loop_score(const Vec& u, const Vec& v, const Mlp& m) {
  const int d = static_cast<int>(u.size());
  double out = m.b2(0);
  for (int j = 0; j < m.W1.rows(); ++j) {
    double z = m.b1(j);
    for (int i = 0; i < d; ++i) z += m.W1(j, i) * u(i) + m.W1(j, d + i) * v(i);
    out += m.W2(0, j) * std::max(z, 0.0);
  }
  return out;
}

}  // namespace

TEST_CASE("score_pair cases") {
  auto z = ProxyNcfParams::zeros(3, 4);
  z.ncf.b2(0) = 0.25;
  CHECK(score_pair(Vec::Random(3), Vec::Random(3), z, Branch::ncf) == 0.25);

  auto f = random_fixture(1);
  const Vec u = f.user, v = f.items.row(2).transpose();
  CHECK(std::abs(score_pair(u, v, f.params, Branch::ncf) - loop_score(u, v, f.params.ncf)) < 1e-12);
  CHECK(std::abs(score_pair(u, v, f.params, Branch::proxy) - loop_score(u, v, f.params.proxy)) < 1e-12);
  ProxyNcfParams swapped = f.params;
  swapped.proxy = f.params.ncf;
  CHECK(score_pair(u, v, swapped, Branch::proxy) == score_pair(u, v, f.params, Branch::ncf));
  CHECK_THROWS_AS(score_pair(Vec::Random(2), v, f.params, Branch::ncf), DimensionError);
}

TEST_CASE("bpr loss values") {
  CHECK(bpr_loss(0.3, 0.3) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bpr_loss(50.0, 0.0) < 1e-20);
  CHECK(bpr_loss(1.0, 0.0) == doctest::Approx(0.31326168751822286).epsilon(1e-14));
  CHECK(std::isfinite(bpr_loss(-700.0, 0.0)));
  CHECK(bpr_loss(-700.0, 0.0) == doctest::Approx(700.0));
  for (double x = -5; x < 5; x += 0.5) CHECK(bpr_loss(x + 0.1, 0.0) < bpr_loss(x, 0.0));
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
}

TEST_CASE("proxy prediction cases") {
  auto f = random_fixture(2);
  const Vec u = f.user, v = f.items.row(0).transpose();
  CHECK(proxy_predict_triplet(u, v, v, f.params) == doctest::Approx(std::log(2.0)));
  ProxyNcfParams sat = ProxyNcfParams::zeros(4, 6);
  sat.proxy.W1.setZero();
  sat.proxy.W1(0, 4) = 1.0;  // p(u, v) = v_0 through one active unit
  sat.proxy.W2(0, 0) = 1.0;
  Vec pos = Vec::Zero(4), neg = Vec::Zero(4);
  pos(0) = 50.0;
  CHECK(proxy_predict_triplet(u, pos, neg, sat) < 1e-20);

  ProxyNcfParams mirror = f.params;
  mirror.proxy = mirror.ncf;
  const auto l = client_losses(mirror, f.user, f.items, f.triplets);
  for (std::size_t t = 0; t < l.ell.size(); ++t) CHECK(l.ell_hat[t] == l.ell[t]);
  CHECK(l.proxy == 0.0);
}

TEST_CASE("client_losses additivity and trivial cases") {
  auto f = random_fixture(3);
  const auto empty = client_losses(f.params, f.user, f.items, {});
  CHECK(empty.ncf == 0.0);
  CHECK(empty.proxy == 0.0);
  CHECK(empty.ell.empty());

  ProxyNcfParams same = ProxyNcfParams::zeros(4, 6);
  ItemTable eq = ItemTable::Zero(2, 4);
  const std::vector<Triplet> one = {{0, 0, 1}};
  const auto l1 = client_losses(same, f.user, eq, one);
  CHECK(l1.ncf == doctest::Approx(std::log(2.0)));
  CHECK(l1.proxy == 0.0);

  const std::vector<Triplet> a = {f.triplets[0]}, b = {f.triplets[1]};
  const std::vector<Triplet> ab = {f.triplets[0], f.triplets[1]};
  const auto la = client_losses(f.params, f.user, f.items, a);
  const auto lb = client_losses(f.params, f.user, f.items, b);
  const auto lab = client_losses(f.params, f.user, f.items, ab);
  CHECK(lab.ncf == doctest::Approx(la.ncf + lb.ncf).epsilon(1e-14));
  CHECK(lab.proxy == doctest::Approx(la.proxy + lb.proxy).epsilon(1e-14));

  std::vector<Triplet> bad = {{0, 0, 99}};
  CHECK_THROWS_AS(client_losses(f.params, f.user, f.items, bad), DimensionError);
}

TEST_CASE("client_backward matches finite differences") {
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    for (ProxyForm form : {ProxyForm::pairwise, ProxyForm::positive_only}) {
      auto f = random_fixture(seed);
      const auto g = client_backward(f.params, f.user, f.items, f.triplets, form);
      auto ncf = [&] { return client_losses(f.params, f.user, f.items, f.triplets, form).ncf; };
      auto prx = [&] { return client_losses(f.params, f.user, f.items, f.triplets, form).proxy; };
      double worst = 0.0;
      auto upd = [&](const fdcheck::Result& r) { worst = std::max(worst, r.max_rel); };
      upd(fdcheck::check(f.user.data(), g.user.data(), f.user.size(), ncf));
      for (const auto& [item, grad] : g.items) {
        Vec row = f.items.row(item).transpose();
        upd(fdcheck::check(row.data(), grad.data(), row.size(), [&] {
          f.items.row(item) = row.transpose();
          return ncf();
        }));
        f.items.row(item) = row.transpose();
      }
      f.params.ncf.for_each_tensor([&](const std::string& name, double* p, Eigen::Index n) {
        const double* gp = name == "W1" ? g.ncf.W1.data() : name == "b1" ? g.ncf.b1.data()
                         : name == "W2" ? g.ncf.W2.data() : g.ncf.b2.data();
        upd(fdcheck::check(p, gp, n, ncf));
      });
      f.params.proxy.for_each_tensor([&](const std::string& name, double* p, Eigen::Index n) {
        const double* gp = name == "W1" ? g.proxy.W1.data() : name == "b1" ? g.proxy.b1.data()
                         : name == "W2" ? g.proxy.W2.data() : g.proxy.b2.data();
        upd(fdcheck::check(p, gp, n, prx));
      });
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("client_backward structural properties") {
  auto f = random_fixture(7, 4, 6, 30, 8);
  const auto g = client_backward(f.params, f.user, f.items, f.triplets);
  std::set<ItemId> expect;
  for (const auto& t : f.triplets) {
    expect.insert(t.pos_item);
    expect.insert(t.neg_item);
  }
  std::set<ItemId> got;
  for (const auto& kv : g.items) got.insert(kv.first);
  CHECK(got == expect);

  // perturbing the proxy branch leaves the NCF loss and gradients alone
  ProxyNcfParams moved = f.params;
  moved.proxy.W1.array() += 0.5;
  const auto g2 = client_backward(moved, f.user, f.items, f.triplets);
  CHECK(g2.losses.ncf == g.losses.ncf);
  CHECK(g2.ncf == g.ncf);
  CHECK(g2.user == g.user);
  for (const auto& [i, v] : g.items) CHECK(g2.items.at(i) == v);

  std::vector<Triplet> doubled = f.triplets;
  doubled.insert(doubled.end(), f.triplets.begin(), f.triplets.end());
  const auto gd = client_backward(f.params, f.user, f.items, doubled);
  CHECK(gd.ncf.W1.isApprox(2.0 * g.ncf.W1, 1e-12));
  CHECK(gd.proxy.W2.isApprox(2.0 * g.proxy.W2, 1e-12));
  CHECK(gd.user.isApprox(2.0 * g.user, 1e-12));

  const auto g0 = client_backward(f.params, f.user, f.items, {});
  CHECK(g0.items.empty());
  CHECK(g0.user.isZero());
}
