#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kunita/bridges.hpp"
#include "kunita/kernels.hpp"
#include "kunita/landmarks.hpp"

namespace kunita {

struct PhyloNode {
  std::string name;
  int parent = -1;
  double edge_length = 0.0;  // length of the edge to the parent
  std::vector<int> children;
  std::optional<LandmarkConfig> observation;  // leaves only

  bool is_leaf() const { return children.empty(); }
};

// Rooted tree with edge lengths, a root state, and leaf shape observations
// under isotropic Gaussian noise eps^2 I.
struct PhyloTree {
  std::vector<PhyloNode> nodes;
  int root = 0;
  LandmarkConfig root_state;
  double obs_noise = 0.0;  // eps

  void validate() const;  // topology + observation compatibility
};

// Parse a Newick string with branch lengths into a tree skeleton
// (names and edge lengths only; observations are bound separately).
PhyloTree parse_newick(const std::string& text);

// Attach observations by leaf name. Throws on missing or unknown names.
void bind_observations(PhyloTree& tree,
                       const std::map<std::string, LandmarkConfig>& by_name);

// Gaussian backward-filter message.
struct Message {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct FilterResult {
  std::vector<Message> node_message;        // fused message at each node
  std::vector<Eigen::MatrixXd> edge_atilde; // a~ of the edge above each node
};

// Leaves-to-root Gaussian recursion: leaf message (obs, eps^2 I); edge of
// length dt maps (nu, P) to (nu, P + dt a~) with a~ = G(nu) frozen at the
// child-side mean; children fuse precision-weighted.
FilterResult backward_filter(const PhyloTree& tree, const KernelParams& params);

// Per-edge standard-normal innovations, indexed by child node id.
using Innovations = std::vector<Eigen::MatrixXd>;

Innovations sample_innovations(const PhyloTree& tree, int steps_per_edge,
                               std::uint64_t seed, std::uint64_t stream);

struct GuideResult {
  double log_weight = 0.0;                  // bridge weights + leaf likelihoods
  std::vector<Eigen::VectorXd> node_state;  // sampled state at each node
  std::vector<PathSample> edge_path;        // path along the edge above each node
};

// Root-to-leaves guided bridging toward each child's message, widened by the
// child message covariance. log_weight is the full log likelihood estimate:
// per edge, log N(nu_c; x_parent, dt a~ + P_c) plus the bridge's integrated
// correction, minus log N(nu_c; x_c, P_c) at internal children (the leaf
// version of that term cancels the observation density).
GuideResult forward_guide(const PhyloTree& tree, const FilterResult& filter,
                          const KernelParams& params, const Innovations& innovations,
                          int steps_per_edge);

struct Priors {
  double mu_log_alpha = 0.0, sd_log_alpha = 1.0;
  double mu_log_sigma = 0.0, sd_log_sigma = 1.0;
};

struct McmcConfig {
  int iterations = 5000;
  double rw_scale = 0.1;
  double pcn_rho = 0.95;
  std::uint64_t seed = 0;
  int steps_per_edge = 20;
  // family / c / dim of the kernel being inferred; alpha and sigma come from
  // the chain state.
  KernelParams kernel;
  double init_alpha = 1.0;
  double init_sigma = 1.0;
};

struct ChainState {
  int iteration = 0;
  double alpha = 0.0;
  double sigma = 0.0;
  double log_posterior = 0.0;
  bool accepted_innovations = false;
  bool accepted_params = false;
};

// Alternating pCN innovation updates and Gaussian random-walk updates on
// (log alpha, log sigma). Bit-reproducible for a fixed seed and config.
// Non-finite proposal weights auto-reject.
std::vector<ChainState> mcmc_infer(const PhyloTree& tree, const Priors& priors,
                                   const McmcConfig& config);

}  // namespace kunita
