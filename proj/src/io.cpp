#include "kunita/io.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace kunita {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_landmarks_json(std::ostream& os, const LandmarkConfig& x) {
  os << "[";
  for (int i = 0; i < x.n; ++i) {
    os << (i ? "," : "") << "[";
    for (int a = 0; a < x.d; ++a)
      os << (a ? "," : "") << format_double(x.coords[i * x.d + a]);
    os << "]";
  }
  os << "]\n";
}

LandmarkConfig read_landmarks_json(std::istream& is) {
  nlohmann::json j;
  is >> j;
  if (!j.is_array() || j.empty()) throw ParameterError("expected a nonempty JSON array of landmarks");
  const int n = static_cast<int>(j.size());
  const int d = static_cast<int>(j.at(0).size());
  if (d < 1 || d > 3) throw ParameterError("landmark dimension must be 1-3");
  Eigen::VectorXd coords(static_cast<Eigen::Index>(n) * d);
  for (int i = 0; i < n; ++i) {
    const auto& row = j.at(i);
    if (static_cast<int>(row.size()) != d) throw ParameterError("ragged landmark array");
    for (int a = 0; a < d; ++a) coords[i * d + a] = row.at(a).get<double>();
  }
  return LandmarkConfig(n, d, std::move(coords));
}

void write_landmarks_csv(std::ostream& os, const LandmarkConfig& x) {
  for (int i = 0; i < x.n; ++i) {
    for (int a = 0; a < x.d; ++a) os << (a ? "," : "") << format_double(x.coords[i * x.d + a]);
    os << "\n";
  }
}

LandmarkConfig read_landmarks_csv(std::istream& is) {
  std::vector<double> vals;
  int d = 0, n = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      vals.push_back(std::stod(cell));
      ++cols;
    }
    if (d == 0) d = cols;
    if (cols != d) throw ParameterError("ragged landmark CSV");
    ++n;
  }
  if (n == 0 || d < 1 || d > 3) throw ParameterError("empty or malformed landmark CSV");
  Eigen::VectorXd coords(static_cast<Eigen::Index>(n) * d);
  for (std::size_t i = 0; i < vals.size(); ++i) coords[static_cast<Eigen::Index>(i)] = vals[i];
  return LandmarkConfig(n, d, std::move(coords));
}

namespace {
bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}
}  // namespace

LandmarkConfig read_landmarks_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParameterError("cannot open landmark file: " + path);
  if (has_suffix(path, ".json")) return read_landmarks_json(is);
  return read_landmarks_csv(is);
}

void write_landmarks_file(const std::string& path, const LandmarkConfig& x) {
  std::ofstream os(path);
  if (!os) throw ParameterError("cannot write landmark file: " + path);
  if (has_suffix(path, ".json"))
    write_landmarks_json(os, x);
  else
    write_landmarks_csv(os, x);
}

void write_path_csv(std::ostream& os, const PathSample& path, int n, int d) {
  os << "time";
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) os << ",x_" << (i + 1) << "_" << (a + 1);
  if (!path.momenta.empty())
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < d; ++a) os << ",p_" << (i + 1) << "_" << (a + 1);
  os << "\n";
  for (std::size_t s = 0; s < path.times.size(); ++s) {
    os << format_double(path.times[s]);
    for (Eigen::Index i = 0; i < path.positions[s].size(); ++i)
      os << "," << format_double(path.positions[s][i]);
    if (!path.momenta.empty())
      for (Eigen::Index i = 0; i < path.momenta[s].size(); ++i)
        os << "," << format_double(path.momenta[s][i]);
    os << "\n";
  }
}

void write_path_json(std::ostream& os, const PathSample& path, int n, int d) {
  nlohmann::json j;
  j["n"] = n;
  j["d"] = d;
  j["seed"] = path.seed;
  j["stream"] = path.stream;
  j["backend"] = path.backend;
  j["convention"] = path.convention;
  j["collision"] = path.collision;
  j["times"] = path.times;
  auto states = nlohmann::json::array();
  for (const auto& x : path.positions) {
    auto row = nlohmann::json::array();
    for (Eigen::Index i = 0; i < x.size(); ++i) row.push_back(x[i]);
    states.push_back(std::move(row));
  }
  j["positions"] = std::move(states);
  if (!path.momenta.empty()) {
    auto mom = nlohmann::json::array();
    for (const auto& p : path.momenta) {
      auto row = nlohmann::json::array();
      for (Eigen::Index i = 0; i < p.size(); ++i) row.push_back(p[i]);
      mom.push_back(std::move(row));
    }
    j["momenta"] = std::move(mom);
  }
  os << j.dump(2) << "\n";
}

}  // namespace kunita
