#pragma once

// Dual-branch client model. The NCF branch scores a (user, item) pair as
// MLP([u || v]) and is trained with the BPR loss. The proxy branch has the
// same architecture and regresses the per-triplet BPR loss so a client can
// report an estimate of its training loss from a single forward pass.

#include <Eigen/Dense>

#include <map>
#include <span>
#include <vector>

#include "fedrec/data.hpp"
#include "fedrec/numkernel.hpp"

namespace fedrec {

using Mlp = MlpParams<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
/// |V| x d, one item per row.
using ItemTable = RowMatrixX<double>;

enum class Branch { ncf, proxy };

/// How the proxy branch turns pair scores into a triplet-loss estimate.
///   pairwise:      l_hat = softplus(p(u,j) - p(u,v))
///   positive_only: l_hat = softplus(p(u,v))
enum class ProxyForm { pairwise, positive_only };

struct ProxyNcfParams {
  Mlp ncf;
  Mlp proxy;
  int embed_dim = 0;

  static ProxyNcfParams xavier(int embed_dim, int hidden, Rng& rng);
  static ProxyNcfParams zeros(int embed_dim, int hidden);

  int hidden() const { return static_cast<int>(ncf.hidden_size()); }
  const Mlp& branch(Branch b) const { return b == Branch::ncf ? ncf : proxy; }
  void validate() const;
};

/// Numerically stable ln(1 + e^x).
double softplus(double x);
/// Logistic function, stable for large |x|.
double sigmoid(double x);

double score_pair(const Eigen::Ref<const Vec>& user, const Eigen::Ref<const Vec>& item,
                  const ProxyNcfParams& params, Branch branch);

/// -ln sigmoid(pos - neg), evaluated as softplus(neg - pos).
double bpr_loss(double pos_score, double neg_score);

double proxy_predict_triplet(const Eigen::Ref<const Vec>& user, const Eigen::Ref<const Vec>& pos,
                             const Eigen::Ref<const Vec>& neg, const ProxyNcfParams& params,
                             ProxyForm form = ProxyForm::pairwise);

struct ClientLosses {
  double ncf = 0.0;    // sum of l
  double proxy = 0.0;  // sum of (l_hat - l)^2
  std::vector<double> ell;
  std::vector<double> ell_hat;
};

/// Triplet item ids index rows of `items`.
ClientLosses client_losses(const ProxyNcfParams& params, const Eigen::Ref<const Vec>& user,
                           const ItemTable& items, std::span<const Triplet> triplets,
                           ProxyForm form = ProxyForm::pairwise);

/// Only the proxy branch predictions, no BPR targets.
std::vector<double> proxy_predictions(const ProxyNcfParams& params, const Eigen::Ref<const Vec>& user,
                                      const ItemTable& items, std::span<const Triplet> triplets,
                                      ProxyForm form = ProxyForm::pairwise);

struct ClientGradients {
  Vec user;
  std::map<ItemId, Vec> items;  // only rows that appear in the batch
  Mlp ncf;
  Mlp proxy;
  ClientLosses losses;
};

/// Gradient of L_ncf + proxy_scale * L_proxy. The BPR targets inside L_proxy
/// are constants, and the proxy loss reaches neither the NCF branch nor the
/// embeddings.
ClientGradients client_backward(const ProxyNcfParams& params, const Eigen::Ref<const Vec>& user,
                                const ItemTable& items, std::span<const Triplet> triplets,
                                ProxyForm form = ProxyForm::pairwise, double proxy_scale = 1.0);

}  // namespace fedrec
