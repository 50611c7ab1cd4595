#pragma once

#include <iosfwd>
#include <string>

#include "kunita/landmarks.hpp"
#include "kunita/processes.hpp"

namespace kunita {

// 17 significant digits: lossless double round-trip.
std::string format_double(double v);

// JSON array of [x, y(, z)] per landmark.
void write_landmarks_json(std::ostream& os, const LandmarkConfig& x);
LandmarkConfig read_landmarks_json(std::istream& is);

// CSV, one landmark per row.
void write_landmarks_csv(std::ostream& os, const LandmarkConfig& x);
LandmarkConfig read_landmarks_csv(std::istream& is);

// Dispatch on .json / .csv extension.
LandmarkConfig read_landmarks_file(const std::string& path);
void write_landmarks_file(const std::string& path, const LandmarkConfig& x);

// One row per time step: time, x_{1,1}, ..., x_{n,d} (momenta appended when
// present).
void write_path_csv(std::ostream& os, const PathSample& path, int n, int d);

// Metadata plus nested state arrays.
void write_path_json(std::ostream& os, const PathSample& path, int n, int d);

}  // namespace kunita
