#include "gmalign/point_cloud_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmalign {
namespace {

[[noreturn]] void fail(const std::string& name, std::size_t line, const std::string& what) {
  throw std::runtime_error(name + ":" + std::to_string(line) + ": " + what);
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

// getline that strips a trailing '\r' so CRLF files parse cleanly.
bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace

PointCloud read_xyz(std::istream& in, const std::string& name) {
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (next_line(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const std::size_t first = line.find_first_not_of(" \t");
    if (line[first] == '#') continue;
    std::istringstream row(line);
    double x, y, z;
    if (!(row >> x >> y >> z)) fail(name, lineno, "expected three coordinates");
    cloud.emplace_back(x, y, z);
  }
  return cloud;
}

PointCloud read_ply(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t lineno = 0;

  if (!next_line(in, line) || (++lineno, line != "ply"))
    fail(name, lineno, "not a ply file (missing 'ply' magic)");

  struct Element {
    std::string element_name;
    std::size_t count = 0;
    std::size_t properties = 0;
    int x = -1, y = -1, z = -1;  // property column indices
    bool has_list = false;
  };
  std::vector<Element> elements;
  bool ascii = false;
  bool header_done = false;

  while (!header_done) {
    if (!next_line(in, line)) fail(name, lineno, "unexpected end of file in header");
    ++lineno;
    if (blank(line)) continue;
    std::istringstream row(line);
    std::string keyword;
    row >> keyword;
    if (keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "end_header") {
      header_done = true;
    } else if (keyword == "format") {
      std::string kind;
      row >> kind;
      if (kind != "ascii") fail(name, lineno, "only ascii ply is supported");
      ascii = true;
    } else if (keyword == "element") {
      Element e;
      long long count = -1;
      if (!(row >> e.element_name >> count) || count < 0)
        fail(name, lineno, "malformed element declaration");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(e);
    } else if (keyword == "property") {
      if (elements.empty()) fail(name, lineno, "property before any element");
      Element& e = elements.back();
      std::string type;
      row >> type;
      if (type == "list") {
        e.has_list = true;
        ++e.properties;
        continue;
      }
      std::string prop;
      if (!(row >> prop)) fail(name, lineno, "malformed property declaration");
      const int column = static_cast<int>(e.properties++);
      if (prop == "x") e.x = column;
      if (prop == "y") e.y = column;
      if (prop == "z") e.z = column;
    } else {
      fail(name, lineno, "unrecognised header keyword '" + keyword + "'");
    }
  }
  if (!ascii) fail(name, lineno, "header missing format declaration");

  std::size_t vertex_index = elements.size();
  for (std::size_t i = 0; i < elements.size(); ++i) {
    if (elements[i].element_name == "vertex") {
      vertex_index = i;
      break;
    }
  }
  if (vertex_index == elements.size()) fail(name, lineno, "no vertex element");
  const Element& vertex = elements[vertex_index];
  if (vertex.x < 0 || vertex.y < 0 || vertex.z < 0)
    fail(name, lineno, "vertex element lacks x/y/z properties");
  if (vertex.has_list) fail(name, lineno, "list properties in the vertex element");

  // Skip data of any elements declared before the vertices (one line each).
  for (std::size_t i = 0; i < vertex_index; ++i) {
    for (std::size_t k = 0; k < elements[i].count; ++k) {
      if (!next_line(in, line)) fail(name, lineno, "unexpected end of file");
      ++lineno;
    }
  }

  PointCloud cloud;
  cloud.reserve(vertex.count);
  std::vector<double> row_values(vertex.properties);
  for (std::size_t k = 0; k < vertex.count; ++k) {
    if (!next_line(in, line)) fail(name, lineno, "unexpected end of file in vertex data");
    ++lineno;
    if (blank(line)) {
      --k;
      continue;
    }
    std::istringstream row(line);
    for (std::size_t c = 0; c < vertex.properties; ++c) {
      if (!(row >> row_values[c])) fail(name, lineno, "short vertex row");
    }
    cloud.emplace_back(row_values[static_cast<std::size_t>(vertex.x)],
                       row_values[static_cast<std::size_t>(vertex.y)],
                       row_values[static_cast<std::size_t>(vertex.z)]);
  }
  return cloud;
}

PointCloud read_point_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string ext;
  const std::size_t dot = path.find_last_of('.');
  if (dot != std::string::npos) {
    ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  }
  PointCloud cloud = ext == "ply" ? read_ply(in, path) : read_xyz(in, path);
  if (cloud.empty()) throw std::runtime_error("'" + path + "' contains no points");
  return cloud;
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  char line[128];
  for (const Vec3& p : cloud) {
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << line;
  }
}

void write_point_cloud(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_xyz(out, cloud);
  if (!out.good()) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace gmalign
