#pragma once

// Animation data for a shaping run: one CSV per frame, an index, and an
// optional SVG overlay of the first and last responses with the band.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "dstune/model_io.hpp"
#include "dstune/shaping.hpp"

namespace dstune {

inline std::string frame_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.csv", i);
  return buf;
}

namespace detail {

inline std::string svg_polyline(const SimTrace& tr, double horizon, double y_lo, double y_hi,
                                double width, double height, const char* color) {
  std::ostringstream os;
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
  // at most ~1000 vertices per line
  const std::size_t stride = std::max<std::size_t>(1, tr.size() / 1000);
  for (std::size_t k = 0; k < tr.size(); k += stride) {
    const double z = std::clamp(tr.values[k], y_lo, y_hi);
    const double x = tr.times[k] / horizon * width;
    const double y = height - (z - y_lo) / (y_hi - y_lo) * height;
    if (k) os << ' ';
    os << format_double(x) << ',' << format_double(y);
  }
  os << "\"/>\n";
  return os.str();
}

inline std::string svg_hline(double z, double y_lo, double y_hi, double width, double height) {
  const double y = height - (z - y_lo) / (y_hi - y_lo) * height;
  std::ostringstream os;
  os << "<line x1=\"0\" y1=\"" << format_double(y) << "\" x2=\"" << format_double(width)
     << "\" y2=\"" << format_double(y) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  return os.str();
}

}  // namespace detail

inline std::string render_overlay_svg(const SimTrace& first, const SimTrace& last,
                                      const Envelope& env) {
  constexpr double width = 800.0, height = 400.0;
  const double y_lo = std::min(0.0, env.z_min - 0.5);
  const double y_hi = std::max(1.6, env.z_max + 0.5);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << detail::svg_hline(env.z_min, y_lo, y_hi, width, height);
  os << detail::svg_hline(env.z_max, y_lo, y_hi, width, height);
  os << detail::svg_polyline(first, env.horizon_t, y_lo, y_hi, width, height, "red");
  os << detail::svg_polyline(last, env.horizon_t, y_lo, y_hi, width, height, "blue");
  os << "</svg>\n";
  return os.str();
}

/// Writes frame_NNNN.csv (t,z), index.csv (frame,eval_index,f,file) and,
/// when `svg` is set, overlay.svg into `dir` (created if missing).
inline void export_frames(const std::vector<ShapingFrame>& frames, const std::string& dir,
                          const Envelope& env, bool svg = true) {
  if (frames.empty()) throw ArgumentError("export_frames: no frames");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory " + dir);
  const std::filesystem::path root(dir);

  std::ostringstream index;
  index << "frame,eval_index,f,file\n";
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& fr = frames[i];
    std::ostringstream csv;
    csv << "t,z\n";
    for (std::size_t k = 0; k < fr.trace.size(); ++k) {
      csv << format_double(fr.trace.times[k]) << ',' << format_double(fr.trace.values[k]) << "\n";
    }
    const std::string name = frame_file_name(i);
    write_text_file((root / name).string(), csv.str());
    index << i << ',' << fr.eval_index << ',' << format_double(fr.f) << ',' << name << "\n";
  }
  write_text_file((root / "index.csv").string(), index.str());
  if (svg) {
    write_text_file((root / "overlay.svg").string(),
                    render_overlay_svg(frames.front().trace, frames.back().trace, env));
  }
}

}  // namespace dstune
