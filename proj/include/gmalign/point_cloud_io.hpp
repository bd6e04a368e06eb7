#pragma once

#include <iosfwd>
#include <string>

#include "gmalign/mixture.hpp"

namespace gmalign {

// ASCII XYZ: one "x y z" triple per line; blank lines and lines starting
// with '#' are skipped. Extra trailing columns are ignored. Throws
// std::runtime_error with the offending line number on malformed input.
PointCloud read_xyz(std::istream& in, const std::string& name = "<stream>");

// ASCII PLY with x/y/z vertex properties in any order; non-ascii formats and
// list properties in the vertex element are rejected. Extra vertex properties
// and non-vertex elements after the vertices are ignored.
PointCloud read_ply(std::istream& in, const std::string& name = "<stream>");

// Dispatches on the extension (.ply vs anything else -> xyz) and opens the file.
PointCloud read_point_cloud(const std::string& path);

// Writes ASCII XYZ with enough digits to round-trip doubles exactly.
void write_xyz(std::ostream& out, const PointCloud& cloud);
void write_point_cloud(const std::string& path, const PointCloud& cloud);

}  // namespace gmalign
