#include "kunita/noise.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace kunita {

std::int64_t NoiseGrid::node_count() const {
  std::int64_t c = 1;
  for (int a = 0; a < d; ++a) c *= counts[a];
  return c;
}

Eigen::VectorXd NoiseGrid::node(std::int64_t j) const {
  Eigen::VectorXd p(d);
  for (int a = d - 1; a >= 0; --a) {
    p[a] = lo[a] + static_cast<double>(j % counts[a]) * h;
    j /= counts[a];
  }
  return p;
}

bool NoiseGrid::contains(const Eigen::VectorXd& p) const {
  for (int a = 0; a < d; ++a)
    if (p[a] < lo[a] || p[a] > lo[a] + (counts[a] - 1) * h) return false;
  return true;
}

NoiseGrid make_noise_grid(const KernelParams& params, const LandmarkConfig& points,
                          std::uint64_t seed, std::uint64_t stream,
                          double h_over_sigma, double pad_sigmas) {
  params.validate();
  // only the bounding box matters here, so repeated vertices (closed
  // polylines) are fine
  if (points.n < 1 || !points.coords.allFinite())
    throw ParameterError("need at least one finite point");
  if (!(h_over_sigma > 0.0) || !(pad_sigmas > 0.0))
    throw ParameterError("grid spacing and padding must be positive");
  NoiseGrid grid;
  grid.d = points.d;
  grid.h = h_over_sigma * params.sigma;
  grid.seed = seed;
  grid.stream = stream;
  grid.lo.resize(grid.d);
  grid.counts.resize(grid.d);
  const double pad = pad_sigmas * params.sigma;
  for (int a = 0; a < grid.d; ++a) {
    double mn = points.coords[a], mx = points.coords[a];
    for (int i = 1; i < points.n; ++i) {
      mn = std::min(mn, points.coords[i * grid.d + a]);
      mx = std::max(mx, points.coords[i * grid.d + a]);
    }
    grid.lo[a] = mn - pad;
    grid.counts[a] = static_cast<int>(std::ceil((mx + pad - grid.lo[a]) / grid.h)) + 1;
  }
  return grid;
}

NoiseIncrement sample_increment(const NoiseBackend& backend, double dt,
                                std::uint64_t step_index) {
  if (dt < 0.0) throw ParameterError("dt must be nonnegative");
  NoiseIncrement inc;
  inc.dt = dt;
  const double sd = std::sqrt(dt);
  if (const auto* grid = std::get_if<NoiseGrid>(&backend)) {
    const CounterRng r(grid->seed, grid->stream);
    const std::int64_t nodes = grid->node_count();
    inc.values.resize(nodes * grid->d);
    for (std::int64_t j = 0; j < nodes; ++j)
      for (int a = 0; a < grid->d; ++a)
        inc.values[j * grid->d + a] = sd * r.normal(step_index, j, a);
  } else {
    const auto& ex = std::get<ExactCovariance>(backend);
    const CounterRng r(ex.seed, ex.stream);
    const int dof = ex.n * ex.params.dim;
    inc.values.resize(dof);
    for (int i = 0; i < dof; ++i) inc.values[i] = sd * r.normal(step_index, i, 0);
  }
  return inc;
}

Eigen::VectorXd drive(const NoiseBackend& backend, const KernelParams& params,
                      const LandmarkConfig& points, const NoiseIncrement& inc) {
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(points.coords.size());
  if (const auto* grid = std::get_if<NoiseGrid>(&backend)) {
    // h^{d/2} weight: with N(0,dt) node increments this gives displacement
    // covariance dt * h^d sum_j k(x,z_j)k(z_j,y), the Riemann-sum
    // approximation of dt * g(x,y).
    const double hd = std::pow(grid->h, 0.5 * grid->d);
    const std::int64_t nodes = grid->node_count();
    if (inc.values.size() != nodes * grid->d)
      throw ParameterError("increment size does not match grid");
    Eigen::MatrixXd zeta(grid->d, nodes);
    for (std::int64_t j = 0; j < nodes; ++j) zeta.col(j) = grid->node(j);
    for (int i = 0; i < points.n; ++i) {
      const Eigen::VectorXd xi = points.point(i);
      if (!grid->contains(xi))
        throw DomainCoverageError("driven point outside the padded noise domain");
      for (std::int64_t j = 0; j < nodes; ++j) {
        const double w = eval_k(params, (xi - zeta.col(j)).norm()) * hd;
        for (int a = 0; a < grid->d; ++a)
          dx[i * grid->d + a] += w * inc.values[j * grid->d + a];
      }
    }
  } else {
    if (inc.values.size() != points.coords.size())
      throw ParameterError("increment size does not match configuration");
    dx = factor_psd(kernel_matrix_g(params, points)) * inc.values;
  }
  return dx;
}

Eigen::VectorXd extend_points(const NoiseBackend& backend, const KernelParams& params,
                              const LandmarkConfig& superset, const NoiseIncrement& inc) {
  if (!std::holds_alternative<NoiseGrid>(backend))
    throw ParameterError("extend_points requires the grid backend; the exact backend is configuration-bound");
  return drive(backend, params, superset, inc);
}

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("truncated noise record", static_cast<std::size_t>(is.tellg()));
  return v;
}

constexpr char kMagic[4] = {'K', 'N', 'R', 'Z'};

}  // namespace

void write_noise_record(std::ostream& os, const NoiseGrid& grid, double dt, int steps) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, 1);
  put(os, grid.seed);
  put(os, grid.stream);
  put<std::int32_t>(os, grid.d);
  put(os, grid.h);
  for (int a = 0; a < grid.d; ++a) put(os, grid.lo[a]);
  for (int a = 0; a < grid.d; ++a) put<std::int32_t>(os, grid.counts[a]);
  put<std::int64_t>(os, steps);
  put(os, dt);
  for (int s = 0; s < steps; ++s) {
    const NoiseIncrement inc = sample_increment(grid, dt, static_cast<std::uint64_t>(s));
    os.write(reinterpret_cast<const char*>(inc.values.data()),
             static_cast<std::streamsize>(inc.values.size() * sizeof(double)));
  }
}

NoiseRecord read_noise_record(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("bad noise record magic", 0);
  if (get<std::uint32_t>(is) != 1) throw ParseError("unsupported noise record version", 4);
  NoiseRecord rec;
  rec.grid.seed = get<std::uint64_t>(is);
  rec.grid.stream = get<std::uint64_t>(is);
  rec.grid.d = get<std::int32_t>(is);
  if (rec.grid.d < 1 || rec.grid.d > 3)
    throw ParseError("bad dimension in noise record", static_cast<std::size_t>(is.tellg()));
  rec.grid.h = get<double>(is);
  rec.grid.lo.resize(rec.grid.d);
  rec.grid.counts.resize(rec.grid.d);
  for (int a = 0; a < rec.grid.d; ++a) rec.grid.lo[a] = get<double>(is);
  for (int a = 0; a < rec.grid.d; ++a) rec.grid.counts[a] = get<std::int32_t>(is);
  const std::int64_t steps = get<std::int64_t>(is);
  rec.dt = get<double>(is);
  const std::int64_t vals = rec.grid.node_count() * rec.grid.d;
  rec.increments.resize(steps);
  for (std::int64_t s = 0; s < steps; ++s) {
    rec.increments[s].dt = rec.dt;
    rec.increments[s].values.resize(vals);
    is.read(reinterpret_cast<char*>(rec.increments[s].values.data()),
            static_cast<std::streamsize>(vals * sizeof(double)));
    if (!is) throw ParseError("truncated noise record payload", static_cast<std::size_t>(is.tellg()));
  }
  return rec;
}

}  // namespace kunita
