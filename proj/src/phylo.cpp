#include "kunita/phylo.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>

#include "kunita/rng.hpp"

namespace kunita {

void PhyloTree::validate() const {
  if (nodes.empty()) throw ParameterError("empty tree");
  if (root < 0 || root >= static_cast<int>(nodes.size())) throw ParameterError("bad root index");
  if (nodes[root].parent != -1) throw ParameterError("root must have no parent");
  int reachable = 0;
  std::vector<int> stack{root};
  std::vector<bool> seen(nodes.size(), false);
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (seen[v]) throw ParameterError("tree contains a cycle");
    seen[v] = true;
    ++reachable;
    for (int c : nodes[v].children) {
      if (nodes[c].parent != v) throw ParameterError("inconsistent parent links");
      if (!(nodes[c].edge_length > 0.0)) throw ParameterError("edge lengths must be positive");
      stack.push_back(c);
    }
  }
  if (reachable != static_cast<int>(nodes.size()))
    throw ParameterError("tree is not connected");
  if (obs_noise < 0.0) throw ParameterError("observation noise must be nonnegative");
  for (const auto& node : nodes) {
    if (node.is_leaf()) {
      if (!node.observation) throw ParameterError("leaf '" + node.name + "' has no observation");
      if (node.observation->coords.size() != root_state.coords.size())
        throw ParameterError("observation dimension mismatch at leaf '" + node.name + "'");
    }
  }
}

namespace {

struct NewickParser {
  const std::string& text;
  std::size_t pos = 0;
  PhyloTree tree;

  explicit NewickParser(const std::string& t) : text(t) {}

  char peek() const {
    if (pos >= text.size()) throw ParseError("unexpected end of Newick input", pos);
    return text[pos];
  }
  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  void expect(char ch) {
    skip_ws();
    if (peek() != ch) throw ParseError(std::string("expected '") + ch + "'", pos);
    ++pos;
  }

  int parse_clade(int parent) {
    skip_ws();
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[id].parent = parent;
    if (peek() == '(') {
      ++pos;
      while (true) {
        const int child = parse_clade(id);
        tree.nodes[id].children.push_back(child);
        skip_ws();
        if (peek() == ',') {
          ++pos;
          continue;
        }
        break;
      }
      expect(')');
    }
    skip_ws();
    // optional label
    std::size_t start = pos;
    while (pos < text.size() && text[pos] != ':' && text[pos] != ',' && text[pos] != ')' &&
           text[pos] != ';' && text[pos] != '(' &&
           !std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
    tree.nodes[id].name = text.substr(start, pos - start);
    skip_ws();
    if (pos < text.size() && text[pos] == ':') {
      ++pos;
      skip_ws();
      std::size_t consumed = 0;
      double len = 0.0;
      try {
        len = std::stod(text.substr(pos), &consumed);
      } catch (const std::exception&) {
        throw ParseError("bad branch length", pos);
      }
      pos += consumed;
      tree.nodes[id].edge_length = len;
    } else if (parent != -1) {
      throw ParseError("missing branch length", pos);
    }
    return id;
  }
};

}  // namespace

PhyloTree parse_newick(const std::string& text) {
  NewickParser p(text);
  p.skip_ws();
  const int root = p.parse_clade(-1);
  p.expect(';');
  p.skip_ws();
  if (p.pos != text.size()) throw ParseError("trailing characters after ';'", p.pos);
  p.tree.root = root;
  for (int c : p.tree.nodes[root].children)
    if (!(p.tree.nodes[c].edge_length > 0.0))
      throw ParseError("non-positive branch length", 0);
  return p.tree;
}

void bind_observations(PhyloTree& tree, const std::map<std::string, LandmarkConfig>& by_name) {
  std::size_t used = 0;
  for (auto& node : tree.nodes) {
    if (!node.is_leaf()) continue;
    const auto it = by_name.find(node.name);
    if (it == by_name.end())
      throw ParameterError("no observation for leaf '" + node.name + "'");
    node.observation = it->second;
    ++used;
  }
  if (used != by_name.size())
    throw ParameterError("observation map names leaves not present in the tree");
}

FilterResult backward_filter(const PhyloTree& tree, const KernelParams& params) {
  tree.validate();
  params.validate();
  const int nd = static_cast<int>(tree.root_state.coords.size());
  const int nn = static_cast<int>(tree.nodes.size());
  FilterResult res;
  res.node_message.resize(nn);
  res.edge_atilde.resize(nn);

  // post-order via recursion on children
  auto visit = [&](auto&& self, int v) -> void {
    const auto& node = tree.nodes[v];
    if (node.is_leaf()) {
      res.node_message[v] = {node.observation->coords,
                             tree.obs_noise * tree.obs_noise *
                                 Eigen::MatrixXd::Identity(nd, nd)};
    } else {
      Eigen::MatrixXd prec = Eigen::MatrixXd::Zero(nd, nd);
      Eigen::VectorXd pm = Eigen::VectorXd::Zero(nd);
      for (int c : node.children) {
        self(self, c);
        const Message& child = res.node_message[c];
        const LandmarkConfig mean_cfg(tree.root_state.n, tree.root_state.d, child.mean);
        res.edge_atilde[c] = kernel_matrix_g(params, mean_cfg);
        const Eigen::MatrixXd p_edge =
            child.cov + tree.nodes[c].edge_length * res.edge_atilde[c];
        const Eigen::LLT<Eigen::MatrixXd> llt(p_edge);
        if (llt.info() != Eigen::Success)
          throw FactorizationError("singular message covariance in backward filter");
        prec += llt.solve(Eigen::MatrixXd::Identity(nd, nd));
        pm += llt.solve(child.mean);
      }
      const Eigen::LLT<Eigen::MatrixXd> llt(prec);
      if (llt.info() != Eigen::Success)
        throw FactorizationError("singular fusion in backward filter");
      Message msg;
      msg.cov = llt.solve(Eigen::MatrixXd::Identity(nd, nd));
      msg.mean = llt.solve(pm);
      res.node_message[v] = std::move(msg);
    }
  };
  visit(visit, tree.root);
  return res;
}

Innovations sample_innovations(const PhyloTree& tree, int steps_per_edge,
                               std::uint64_t seed, std::uint64_t stream) {
  const int nd = static_cast<int>(tree.root_state.coords.size());
  Innovations z(tree.nodes.size());
  for (std::size_t v = 0; v < tree.nodes.size(); ++v) {
    if (tree.nodes[v].parent < 0) continue;
    const CounterRng rng(seed, stream * 0x10000ull + v);
    z[v].resize(steps_per_edge, nd);
    for (int s = 0; s < steps_per_edge; ++s)
      for (int i = 0; i < nd; ++i) z[v](s, i) = rng.normal(static_cast<std::uint64_t>(s), i, 0);
  }
  return z;
}

namespace {

double log_gaussian(const Eigen::VectorXd& resid, const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw FactorizationError("singular covariance in guide weight");
  const double logdet =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double quad = resid.dot(llt.solve(resid));
  return -0.5 * (resid.size() * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

}  // namespace

GuideResult forward_guide(const PhyloTree& tree, const FilterResult& filter,
                          const KernelParams& params, const Innovations& innovations,
                          int steps_per_edge) {
  tree.validate();
  GuideResult res;
  res.node_state.assign(tree.nodes.size(), Eigen::VectorXd());
  res.edge_path.resize(tree.nodes.size());
  res.node_state[tree.root] = tree.root_state.coords;

  auto visit = [&](auto&& self, int v) -> void {
    for (int c : tree.nodes[v].children) {
      const Message& msg = filter.node_message[c];
      BridgeSpec spec;
      spec.target = LandmarkConfig(tree.root_state.n, tree.root_state.d, msg.mean);
      spec.horizon = tree.nodes[c].edge_length;
      spec.method = BridgeMethod::Guided;
      spec.steps = steps_per_edge;
      spec.widening = msg.cov;
      const LandmarkConfig x0(tree.root_state.n, tree.root_state.d, res.node_state[v]);
      // a~ inside the bridge is G(target) = G(child message mean): exactly the
      // matrix frozen by the backward filter for this edge.
      WeightedPath wp = simulate_bridge_with_innovations(
          spec, BridgeDynamics(KunitaDiffusion{params}), x0, innovations[c]);
      res.node_state[c] = wp.path.positions.back();

      // Likelihood-estimator bookkeeping: the edge's path-measure ratio is
      // N(nu_c; x_parent, dt a~ + P_c) * exp(sum G dt) / N(nu_c; x_c, P_c).
      // At a leaf, N(nu; x_c, P) is the observation density itself and cancels
      // against the observation factor of the target, so only the parent term
      // remains (exactly so when eps = 0 and the bridge conditions hard).
      res.log_weight += wp.log_weight;
      res.log_weight += log_gaussian(
          msg.mean - res.node_state[v],
          tree.nodes[c].edge_length * filter.edge_atilde[c] + msg.cov);
      res.edge_path[c] = std::move(wp.path);
      if (!tree.nodes[c].is_leaf()) {
        res.log_weight -= log_gaussian(msg.mean - res.node_state[c], msg.cov);
        self(self, c);
      }
    }
  };
  visit(visit, tree.root);
  return res;
}

namespace {

double log_prior(const Priors& priors, double log_alpha, double log_sigma) {
  const double za = (log_alpha - priors.mu_log_alpha) / priors.sd_log_alpha;
  const double zs = (log_sigma - priors.mu_log_sigma) / priors.sd_log_sigma;
  return -0.5 * (za * za + zs * zs);
}

}  // namespace

std::vector<ChainState> mcmc_infer(const PhyloTree& tree, const Priors& priors,
                                   const McmcConfig& config) {
  tree.validate();
  if (config.iterations < 0) throw ParameterError("iterations must be nonnegative");
  std::vector<ChainState> chain;
  if (config.iterations == 0) return chain;

  auto evaluate = [&](double log_alpha, double log_sigma, const Innovations& z) -> double {
    KernelParams params = config.kernel;
    params.alpha = std::exp(log_alpha);
    params.sigma = std::exp(log_sigma);
    try {
      const FilterResult filter = backward_filter(tree, params);
      const GuideResult guide =
          forward_guide(tree, filter, params, z, config.steps_per_edge);
      // An overflowed weight estimate means the guided proposal left the
      // regime where the estimator is meaningful; reject such states.
      if (!std::isfinite(guide.log_weight))
        return -std::numeric_limits<double>::infinity();
      return guide.log_weight;
    } catch (const ParameterError&) {
      return -std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  double log_alpha = std::log(config.init_alpha);
  double log_sigma = std::log(config.init_sigma);
  Innovations z = sample_innovations(tree, config.steps_per_edge, config.seed, 0);
  double log_w = evaluate(log_alpha, log_sigma, z);
  const double rho = config.pcn_rho;
  const double rho_comp = std::sqrt(1.0 - rho * rho);

  chain.reserve(config.iterations);
  for (int it = 0; it < config.iterations; ++it) {
    ChainState state;
    state.iteration = it;

    // (i) pCN refresh of the Wiener innovations
    {
      Innovations xi =
          sample_innovations(tree, config.steps_per_edge, config.seed,
                             2 * static_cast<std::uint64_t>(it) + 1);
      Innovations zp = z;
      for (std::size_t v = 0; v < zp.size(); ++v)
        if (zp[v].size() > 0) zp[v] = rho * z[v] + rho_comp * xi[v];
      const double log_wp = evaluate(log_alpha, log_sigma, zp);
      const CounterRng acc(config.seed, 2 * static_cast<std::uint64_t>(it) + 1);
      const double u = acc.uniform(0, 0, 7);
      if (std::isfinite(log_wp) && std::log(u) < log_wp - log_w) {
        z = std::move(zp);
        log_w = log_wp;
        state.accepted_innovations = true;
      }
    }

    // (ii) Gaussian random walk on (log alpha, log sigma)
    {
      const CounterRng prop(config.seed, 2 * static_cast<std::uint64_t>(it) + 2);
      const double la = log_alpha + config.rw_scale * prop.normal(0, 0, 0);
      const double ls = log_sigma + config.rw_scale * prop.normal(0, 1, 0);
      const double log_wp = evaluate(la, ls, z);
      const double log_ratio = (log_wp + log_prior(priors, la, ls)) -
                               (log_w + log_prior(priors, log_alpha, log_sigma));
      const double u = prop.uniform(0, 0, 7);
      if (std::isfinite(log_wp) && std::log(u) < log_ratio) {
        log_alpha = la;
        log_sigma = ls;
        log_w = log_wp;
        state.accepted_params = true;
      }
    }

    state.alpha = std::exp(log_alpha);
    state.sigma = std::exp(log_sigma);
    state.log_posterior = log_w + log_prior(priors, log_alpha, log_sigma);
    chain.push_back(state);
  }
  return chain;
}

}  // namespace kunita
