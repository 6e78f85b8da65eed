#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dextog/geometry.hpp"

namespace dextog {

PointCloud parse_xyz(const std::string& text) {
  PointCloud cloud;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    std::istringstream fields(line);
    std::string tok[3];
    Point p;
    for (int k = 0; k < 3; ++k) {
      if (!(fields >> tok[k])) {
        throw Error(Errc::Parse, "line " + std::to_string(line_no) + ": expected 3 coordinates");
      }
      std::size_t used = 0;
      try {
        p[k] = std::stod(tok[k], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok[k].size()) {
        throw Error(Errc::Parse, "line " + std::to_string(line_no) + ": bad number '" + tok[k] + "'");
      }
      if (!std::isfinite(p[k])) {
        throw Error(Errc::Parse, "line " + std::to_string(line_no) + ": non-finite coordinate");
      }
    }
    std::string extra;
    if (fields >> extra) {
      throw Error(Errc::Parse, "line " + std::to_string(line_no) + ": trailing field '" + extra + "'");
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_xyz(buf.str());
}

void save_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  char buf[96];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
}

}  // namespace dextog
