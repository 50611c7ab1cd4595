#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "kunita/phylo.hpp"
#include "kunita/rng.hpp"

using namespace kunita;

namespace {

KernelParams se(int d, double alpha = 1.0, double sigma = 1.0) {
  return {KernelFamily::SquaredExponential, alpha, sigma, 0.0, d};
}

LandmarkConfig scalar(double v) { return LandmarkConfig(1, 1, Eigen::VectorXd::Constant(1, v)); }

double log_normal_pdf(double x, double mu, double var) {
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + (x - mu) * (x - mu) / var);
}

PhyloTree caterpillar(double t1, double t2, double t3, double ya, double yb,
                      double eps, double root) {
  PhyloTree tree = parse_newick("((A:" + std::to_string(t2) + ",B:" + std::to_string(t3) +
                                "):" + std::to_string(t1) + ")R:0;");
  bind_observations(tree, {{"A", scalar(ya)}, {"B", scalar(yb)}});
  tree.root_state = scalar(root);
  tree.obs_noise = eps;
  return tree;
}

}  // namespace

TEST_CASE("newick parsing") {
  const PhyloTree t1 = parse_newick("(A:1,B:1):0;");
  int leaves = 0;
  for (const auto& n : t1.nodes)
    if (n.is_leaf()) {
      ++leaves;
      CHECK(n.edge_length == 1.0);
    }
  CHECK(leaves == 2);
  CHECK(t1.nodes[t1.root].parent == -1);

  const PhyloTree t2 = parse_newick("((A:1,B:1):0.5,C:1.5):0;");
  leaves = 0;
  bool found_internal = false;
  for (const auto& n : t2.nodes) {
    if (n.is_leaf())
      ++leaves;
    else if (n.parent != -1) {
      found_internal = true;
      CHECK(n.edge_length == 0.5);
    }
  }
  CHECK(leaves == 3);
  CHECK(found_internal);

  CHECK_THROWS_AS(parse_newick("((A:1,B:1):0.5;"), ParseError);
  CHECK_THROWS_AS(parse_newick("(A:1,B:1):0; extra"), ParseError);
  CHECK_THROWS_AS(parse_newick("(A,B:1):0;"), ParseError);  // missing length
  try {
    parse_newick("((A:1,B:1):0.5;");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset == 14);  // where ')' was expected
  }
}

TEST_CASE("observation binding") {
  PhyloTree tree = parse_newick("(A:1,B:2):0;");
  CHECK_THROWS_AS(bind_observations(tree, {{"A", scalar(0.0)}}), ParameterError);
  CHECK_THROWS_AS(
      bind_observations(tree, {{"A", scalar(0.0)}, {"B", scalar(1.0)}, {"X", scalar(2.0)}}),
      ParameterError);
  bind_observations(tree, {{"A", scalar(0.0)}, {"B", scalar(1.0)}});
  tree.root_state = scalar(0.0);
  CHECK_NOTHROW(tree.validate());
}

TEST_CASE("single-edge backward message is (y, dt a~)") {
  PhyloTree tree = parse_newick("(A:0.7)R:0;");
  bind_observations(tree, {{"A", scalar(1.3)}});
  tree.root_state = scalar(0.0);
  tree.obs_noise = 0.0;
  const KernelParams p = se(1, 0.8, 1.1);
  const FilterResult f = backward_filter(tree, p);
  const double g0 = variance(p);
  const Message& root = f.node_message[tree.root];
  CHECK(root.mean[0] == doctest::Approx(1.3).epsilon(1e-14));
  CHECK(root.cov(0, 0) == doctest::Approx(0.7 * g0).epsilon(1e-12));
}

TEST_CASE("fusing two identical leaves halves the covariance") {
  PhyloTree tree = parse_newick("(A:0.5,B:0.5)R:0;");
  bind_observations(tree, {{"A", scalar(2.0)}, {"B", scalar(2.0)}});
  tree.root_state = scalar(0.0);
  tree.obs_noise = 0.1;
  const KernelParams p = se(1);
  const FilterResult f = backward_filter(tree, p);
  const double single = 0.1 * 0.1 + 0.5 * variance(p);
  const Message& root = f.node_message[tree.root];
  CHECK(root.mean[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(root.cov(0, 0) == doctest::Approx(single / 2.0).epsilon(1e-12));
}

TEST_CASE("caterpillar root message matches scalar Gaussian algebra") {
  const double t1 = 0.4, t2 = 0.6, t3 = 0.9, ya = 1.0, yb = -0.5, eps = 0.2;
  const KernelParams p = se(1, 0.7, 1.3);
  const double g0 = variance(p);
  PhyloTree tree = caterpillar(t1, t2, t3, ya, yb, eps, 0.0);
  const FilterResult f = backward_filter(tree, p);

  // hand recursion: leaf messages (y, eps^2), edges add t*g0, precision fusion
  const double pa = eps * eps + t2 * g0, pb = eps * eps + t3 * g0;
  const double pv = 1.0 / (1.0 / pa + 1.0 / pb);
  const double nv = pv * (ya / pa + yb / pb);
  const double proot = pv + t1 * g0;

  const Message& root = f.node_message[tree.root];
  CHECK(root.mean[0] == doctest::Approx(nv).epsilon(1e-12));
  CHECK(root.cov(0, 0) == doctest::Approx(proot).epsilon(1e-12));
}

TEST_CASE("fusion is order-independent and covariance-dominated") {
  const KernelParams p = se(2);
  Eigen::VectorXd ya(4), yb(4), yc(4);
  ya << 0, 0, 1, 0;
  yb << 0.3, 0.1, 1.2, -0.2;
  yc << -0.2, 0.4, 0.9, 0.3;
  auto make = [&](const std::string& newick) {
    PhyloTree tree = parse_newick(newick);
    bind_observations(tree, {{"A", LandmarkConfig(2, 2, ya)},
                             {"B", LandmarkConfig(2, 2, yb)},
                             {"C", LandmarkConfig(2, 2, yc)}});
    tree.root_state = LandmarkConfig(2, 2, ya);
    tree.obs_noise = 0.05;
    return tree;
  };
  const PhyloTree t1 = make("((A:1,B:0.8):0.5,C:1.2)R:0;");
  const PhyloTree t2 = make("(C:1.2,(B:0.8,A:1):0.5)R:0;");
  const FilterResult f1 = backward_filter(t1, p);
  const FilterResult f2 = backward_filter(t2, p);
  const Message& r1 = f1.node_message[t1.root];
  const Message& r2 = f2.node_message[t2.root];
  CHECK((r1.mean - r2.mean).norm() <= 1e-12);
  CHECK((r1.cov - r2.cov).norm() <= 1e-12);

  // fused covariance is dominated by each child edge covariance
  for (int c : t1.nodes[t1.root].children) {
    const Eigen::MatrixXd p_edge = f1.node_message[c].cov +
                                   t1.nodes[c].edge_length * f1.edge_atilde[c];
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p_edge - r1.cov);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("single-edge guide with eps = 0 reduces to a plain bridge") {
  PhyloTree tree = parse_newick("(A:0.8)R:0;");
  const KernelParams p = se(2);
  Eigen::VectorXd y(4), x0(4);
  y << 0.4, 0.2, 1.3, -0.1;
  x0 << 0, 0, 1, 0;
  bind_observations(tree, {{"A", LandmarkConfig(2, 2, y)}});
  tree.root_state = LandmarkConfig(2, 2, x0);
  tree.obs_noise = 0.0;

  const int steps = 30;
  const Innovations z = sample_innovations(tree, steps, 5, 0);
  const FilterResult f = backward_filter(tree, p);
  const GuideResult g = forward_guide(tree, f, p, z, steps);

  int leaf = -1;
  for (std::size_t v = 0; v < tree.nodes.size(); ++v)
    if (tree.nodes[v].is_leaf()) leaf = static_cast<int>(v);
  BridgeSpec spec;
  spec.target = LandmarkConfig(2, 2, y);
  spec.horizon = 0.8;
  spec.method = BridgeMethod::Guided;
  spec.steps = steps;
  spec.widening = Eigen::MatrixXd::Zero(4, 4);
  const WeightedPath direct = simulate_bridge_with_innovations(
      spec, KunitaDiffusion{p}, tree.root_state, z[leaf]);
  for (std::size_t s = 0; s < direct.path.positions.size(); ++s)
    CHECK(g.edge_path[leaf].positions[s] == direct.path.positions[s]);
}

TEST_CASE("linear single-landmark model: weight equals the exact likelihood") {
  // n = 1 makes a(x) = g(0) constant, so the bridge correction vanishes and
  // the estimator must be exact and innovation-independent
  const double t1 = 0.5, t2 = 0.7, t3 = 0.3, ya = 0.9, yb = -0.4, eps = 0.15;
  const double root = 0.1;
  const KernelParams p = se(1, 0.8, 1.2);
  const double g0 = variance(p);
  PhyloTree tree = caterpillar(t1, t2, t3, ya, yb, eps, root);
  const FilterResult f = backward_filter(tree, p);

  // exact: (ya, yb) jointly Gaussian around the root state
  const double vaa = (t1 + t2) * g0 + eps * eps;
  const double vbb = (t1 + t3) * g0 + eps * eps;
  const double vab = t1 * g0;
  const double det = vaa * vbb - vab * vab;
  const double da = ya - root, db = yb - root;
  const double quad = (vbb * da * da - 2.0 * vab * da * db + vaa * db * db) / det;
  const double exact = -0.5 * (2.0 * std::log(2.0 * std::numbers::pi) + std::log(det) + quad);

  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const Innovations z = sample_innovations(tree, 40, seed, 0);
    const GuideResult g = forward_guide(tree, f, p, z, 40);
    CHECK(g.log_weight == doctest::Approx(exact).epsilon(1e-10));
  }
}

TEST_CASE("forward_guide is deterministic in its innovations") {
  PhyloTree tree = caterpillar(0.5, 0.7, 0.3, 0.9, -0.4, 0.1, 0.0);
  const KernelParams p = se(1);
  const FilterResult f = backward_filter(tree, p);
  const Innovations z = sample_innovations(tree, 20, 9, 4);
  const GuideResult a = forward_guide(tree, f, p, z, 20);
  const GuideResult b = forward_guide(tree, f, p, z, 20);
  CHECK(std::isfinite(a.log_weight));
  CHECK(a.log_weight == b.log_weight);
  for (std::size_t v = 0; v < a.node_state.size(); ++v)
    if (a.node_state[v].size() > 0) CHECK(a.node_state[v] == b.node_state[v]);
}

TEST_CASE("mcmc basics: empty chain, reproducibility, degenerate proposals") {
  PhyloTree tree = caterpillar(0.5, 0.7, 0.3, 0.9, -0.4, 0.1, 0.0);
  Priors priors;
  McmcConfig cfg;
  cfg.kernel = se(1);
  cfg.steps_per_edge = 10;
  cfg.seed = 42;

  cfg.iterations = 0;
  CHECK(mcmc_infer(tree, priors, cfg).empty());

  cfg.iterations = 25;
  const auto c1 = mcmc_infer(tree, priors, cfg);
  const auto c2 = mcmc_infer(tree, priors, cfg);
  REQUIRE(c1.size() == 25);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1[i].alpha == c2[i].alpha);
    CHECK(c1[i].sigma == c2[i].sigma);
    CHECK(c1[i].log_posterior == c2[i].log_posterior);
  }

  // rho = 1 pCN proposals and zero-scale random walks change nothing and are
  // always accepted
  cfg.pcn_rho = 1.0;
  cfg.rw_scale = 0.0;
  const auto frozen = mcmc_infer(tree, priors, cfg);
  for (const auto& s : frozen) {
    CHECK(s.alpha == 1.0);
    CHECK(s.sigma == 1.0);
    CHECK(s.accepted_innovations);
    CHECK(s.accepted_params);
    CHECK(s.log_posterior == frozen.front().log_posterior);
  }
}

TEST_CASE("data-free chain reproduces the prior") {
  // eps so large the likelihood is flat: marginals must match log-normal(0,1)
  PhyloTree tree = caterpillar(0.5, 0.5, 0.5, 0.2, -0.2, 1e6, 0.0);
  Priors priors;
  McmcConfig cfg;
  cfg.kernel = se(1);
  cfg.steps_per_edge = 4;
  cfg.seed = 7;
  cfg.iterations = 40000;
  cfg.rw_scale = 1.2;
  cfg.pcn_rho = 0.95;
  const auto chain = mcmc_infer(tree, priors, cfg);

  // thin to ~2000 draws, compare log(alpha) and log(sigma) against N(0,1)
  // with a one-sample Kolmogorov-Smirnov test at the 1% level
  for (int coord = 0; coord < 2; ++coord) {
    std::vector<double> draws;
    for (std::size_t i = 0; i < chain.size(); i += 20)
      draws.push_back(std::log(coord == 0 ? chain[i].alpha : chain[i].sigma));
    std::sort(draws.begin(), draws.end());
    double ks = 0.0;
    const double n = static_cast<double>(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) {
      const double cdf = 0.5 * std::erfc(-draws[i] / std::numbers::sqrt2);
      ks = std::max(ks, std::fabs(cdf - (i + 1) / n));
      ks = std::max(ks, std::fabs(cdf - i / n));
    }
    // 1% critical value ~ 1.63/sqrt(n); allow slack for residual chain
    // autocorrelation after thinning
    CHECK(ks <= 2.0 * 1.63 / std::sqrt(n));
  }
}
