#include "fedrec/proxyncf.hpp"

#include <cmath>

namespace fedrec {

ProxyNcfParams ProxyNcfParams::xavier(int embed_dim, int hidden, Rng& rng) {
  if (embed_dim < 1 || hidden < 1) throw DimensionError("ProxyNcfParams: dims must be positive");
  ProxyNcfParams p;
  p.embed_dim = embed_dim;
  p.ncf = Mlp::xavier(2 * embed_dim, hidden, 1, rng);
  p.proxy = Mlp::xavier(2 * embed_dim, hidden, 1, rng);
  return p;
}

ProxyNcfParams ProxyNcfParams::zeros(int embed_dim, int hidden) {
  if (embed_dim < 1 || hidden < 1) throw DimensionError("ProxyNcfParams: dims must be positive");
  ProxyNcfParams p;
  p.embed_dim = embed_dim;
  p.ncf = Mlp(2 * embed_dim, hidden, 1);
  p.proxy = Mlp(2 * embed_dim, hidden, 1);
  return p;
}

void ProxyNcfParams::validate() const {
  if (embed_dim < 1) throw DimensionError("ProxyNcfParams: embed_dim must be positive");
  for (const Mlp* m : {&ncf, &proxy}) {
    if (m->input_size() != 2 * embed_dim || m->output_size() != 1 || m->b1.size() != m->hidden_size() ||
        m->W2.cols() != m->hidden_size() || m->b2.size() != 1)
      throw DimensionError("ProxyNcfParams: branch shape inconsistent with embed_dim");
  }
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double score_pair(const Eigen::Ref<const Vec>& user, const Eigen::Ref<const Vec>& item,
                  const ProxyNcfParams& params, Branch branch) {
  if (user.size() != params.embed_dim || item.size() != params.embed_dim)
    throw DimensionError("score_pair: embedding length != embed_dim");
  Vec x(2 * params.embed_dim);
  x << user, item;
  return mlp_predict(params.branch(branch), x)(0, 0);
}

double bpr_loss(double pos_score, double neg_score) { return softplus(neg_score - pos_score); }

double proxy_predict_triplet(const Eigen::Ref<const Vec>& user, const Eigen::Ref<const Vec>& pos,
                             const Eigen::Ref<const Vec>& neg, const ProxyNcfParams& params, ProxyForm form) {
  if (neg.size() != params.embed_dim) throw DimensionError("proxy_predict_triplet: negative length != embed_dim");
  const double p_pos = score_pair(user, pos, params, Branch::proxy);
  if (form == ProxyForm::positive_only) return softplus(p_pos);
  const double p_neg = score_pair(user, neg, params, Branch::proxy);
  return softplus(p_neg - p_pos);
}

namespace {

struct BatchInputs {
  Mat pos;  // 2d x n
  Mat neg;
};

BatchInputs build_inputs(const ProxyNcfParams& params, const Eigen::Ref<const Vec>& user,
                         const ItemTable& items, std::span<const Triplet> triplets) {
  const int d = params.embed_dim;
  if (user.size() != d || items.cols() != d) throw DimensionError("client batch: embedding width != embed_dim");
  const auto n = static_cast<Eigen::Index>(triplets.size());
  BatchInputs in{Mat(2 * d, n), Mat(2 * d, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const Triplet& t = triplets[static_cast<std::size_t>(k)];
    if (t.pos_item >= items.rows() || t.neg_item >= items.rows())
      throw DimensionError("client batch: item id " + std::to_string(std::max(t.pos_item, t.neg_item)) +
                           " out of range");
    in.pos.col(k).head(d) = user;
    in.pos.col(k).tail(d) = items.row(t.pos_item).transpose();
    in.neg.col(k).head(d) = user;
    in.neg.col(k).tail(d) = items.row(t.neg_item).transpose();
  }
  return in;
}

}  // namespace

std::vector<double> proxy_predictions(const ProxyNcfParams& params, const Eigen::Ref<const Vec>& user,
                                      const ItemTable& items, std::span<const Triplet> triplets,
                                      ProxyForm form) {
  if (triplets.empty()) return {};
  const BatchInputs in = build_inputs(params, user, items, triplets);
  const Mat p_pos = mlp_predict(params.proxy, in.pos);
  std::vector<double> out(triplets.size());
  if (form == ProxyForm::positive_only) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = softplus(p_pos(0, static_cast<Eigen::Index>(k)));
    return out;
  }
  const Mat p_neg = mlp_predict(params.proxy, in.neg);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    out[k] = softplus(p_neg(0, c) - p_pos(0, c));
  }
  return out;
}

ClientLosses client_losses(const ProxyNcfParams& params, const Eigen::Ref<const Vec>& user,
                           const ItemTable& items, std::span<const Triplet> triplets, ProxyForm form) {
  ClientLosses out;
  if (triplets.empty()) return out;
  const BatchInputs in = build_inputs(params, user, items, triplets);
  const Mat y_pos = mlp_predict(params.ncf, in.pos);
  const Mat y_neg = mlp_predict(params.ncf, in.neg);
  out.ell_hat = proxy_predictions(params, user, items, triplets, form);
  out.ell.resize(triplets.size());
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    out.ell[k] = bpr_loss(y_pos(0, c), y_neg(0, c));
    out.ncf += out.ell[k];
    const double r = out.ell_hat[k] - out.ell[k];
    out.proxy += r * r;
  }
  return out;
}

ClientGradients client_backward(const ProxyNcfParams& params, const Eigen::Ref<const Vec>& user,
                                const ItemTable& items, std::span<const Triplet> triplets, ProxyForm form,
                                double proxy_scale) {
  const int d = params.embed_dim;
  ClientGradients g;
  g.user = Vec::Zero(d);
  g.ncf = params.ncf.zeros_like();
  g.proxy = params.proxy.zeros_like();
  if (triplets.empty()) return g;
  const auto n = static_cast<Eigen::Index>(triplets.size());
  const BatchInputs in = build_inputs(params, user, items, triplets);

  // NCF branch: l = softplus(y_neg - y_pos).
  auto f_pos = mlp_forward(params.ncf, in.pos);
  auto f_neg = mlp_forward(params.ncf, in.neg);
  Mat dy_pos(1, n), dy_neg(1, n);
  g.losses.ell.resize(triplets.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    const double diff = f_neg.Y(0, k) - f_pos.Y(0, k);
    const double ell = softplus(diff);
    g.losses.ell[static_cast<std::size_t>(k)] = ell;
    g.losses.ncf += ell;
    const double s = sigmoid(diff);
    dy_pos(0, k) = -s;
    dy_neg(0, k) = s;
  }
  auto b_pos = mlp_backward(params.ncf, f_pos.cache, dy_pos);
  auto b_neg = mlp_backward(params.ncf, f_neg.cache, dy_neg);
  g.ncf = b_pos.grads;
  g.ncf += b_neg.grads;
  g.user = b_pos.dX.topRows(d).rowwise().sum() + b_neg.dX.topRows(d).rowwise().sum();
  for (Eigen::Index k = 0; k < n; ++k) {
    const Triplet& t = triplets[static_cast<std::size_t>(k)];
    auto add = [&](ItemId item, const auto& col) {
      auto [it, fresh] = g.items.try_emplace(item, col);
      if (!fresh) it->second += col;
    };
    add(t.pos_item, b_pos.dX.col(k).tail(d));
    add(t.neg_item, b_neg.dX.col(k).tail(d));
  }

  // Proxy branch: targets l are constants, input gradients are discarded.
  g.losses.ell_hat.resize(triplets.size());
  auto p_pos = mlp_forward(params.proxy, in.pos);
  Mat dp_pos(1, n);
  if (form == ProxyForm::positive_only) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto i = static_cast<std::size_t>(k);
      const double pred = softplus(p_pos.Y(0, k));
      g.losses.ell_hat[i] = pred;
      const double r = pred - g.losses.ell[i];
      g.losses.proxy += r * r;
      dp_pos(0, k) = proxy_scale * 2.0 * r * sigmoid(p_pos.Y(0, k));
    }
    g.proxy = mlp_backward(params.proxy, p_pos.cache, dp_pos).grads;
    return g;
  }
  auto p_neg = mlp_forward(params.proxy, in.neg);
  Mat dp_neg(1, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double z = p_neg.Y(0, k) - p_pos.Y(0, k);
    const double pred = softplus(z);
    g.losses.ell_hat[i] = pred;
    const double r = pred - g.losses.ell[i];
    g.losses.proxy += r * r;
    const double dz = proxy_scale * 2.0 * r * sigmoid(z);
    dp_pos(0, k) = -dz;
    dp_neg(0, k) = dz;
  }
  g.proxy = mlp_backward(params.proxy, p_pos.cache, dp_pos).grads;
  g.proxy += mlp_backward(params.proxy, p_neg.cache, dp_neg).grads;
  return g;
}

}  // namespace fedrec
