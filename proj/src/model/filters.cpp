#include "sfnet/model/filters.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace sfnet::model {

Plane parse_plane(const std::string& s) {
  if (s == "xy") return Plane::kXY;
  if (s == "yz") return Plane::kYZ;
  if (s == "xz") return Plane::kXZ;
  throw std::invalid_argument("plane must be xy, yz or xz, got '" + s + "'");
}

std::string plane_name(Plane p) {
  switch (p) {
    case Plane::kXY: return "xy";
    case Plane::kYZ: return "yz";
    case Plane::kXZ: return "xz";
  }
  return "?";
}

std::vector<std::uint8_t> normalize_to_u8(const std::vector<double>& values) {
  std::vector<std::uint8_t> out(values.size(), 0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround((values[i] - *lo) / range * 255.0));
  return out;
}

template <typename T>
FilterImage filter_plane_image(const Tensor<T>& filter_re, const Tensor<T>& filter_im,
                               const spectral::Grid3& grid, std::size_t channel, Plane plane) {
  const Shape expect{filter_re.dim(0), grid.x, grid.y, grid.half_z()};
  if (filter_re.shape() != expect || filter_im.shape() != expect) {
    throw std::invalid_argument("filter shape " + shape_str(filter_re.shape()) +
                                " does not match grid half spectrum " + shape_str(expect));
  }
  if (channel >= filter_re.dim(0)) {
    throw std::out_of_range("channel " + std::to_string(channel) + " out of range [0, " +
                            std::to_string(filter_re.dim(0)) + ")");
  }
  spectral::SpectrumHalf<T> half;
  half.grid = grid;
  half.channels = 1;
  half.coeffs = spectral::ComplexTensor<T>({1, grid.x, grid.y, grid.half_z()});
  const std::size_t hv = grid.half_volume();
  for (std::size_t i = 0; i < hv; ++i) {
    half.coeffs.re[i] = filter_re[channel * hv + i];
    half.coeffs.im[i] = filter_im[channel * hv + i];
  }
  const spectral::ComplexTensor<T> full = spectral::hermitian_extend(half);
  Tensor<double> mag({grid.x, grid.y, grid.z});
  for (std::size_t i = 0; i < mag.numel(); ++i)
    mag[i] = std::hypot(static_cast<double>(full.re[i]), static_cast<double>(full.im[i]));
  const Tensor<double> centered = spectral::fftshift3(mag);

  FilterImage img;
  img.channel = channel;
  img.plane = plane;
  const std::size_t cx = grid.x / 2, cy = grid.y / 2, cz = grid.z / 2;
  auto at = [&](std::size_t x, std::size_t y, std::size_t z) {
    return centered[(x * grid.y + y) * grid.z + z];
  };
  switch (plane) {
    case Plane::kXY: img.width = grid.x; img.height = grid.y; break;
    case Plane::kYZ: img.width = grid.y; img.height = grid.z; break;
    case Plane::kXZ: img.width = grid.x; img.height = grid.z; break;
  }
  img.magnitude.resize(img.width * img.height);
  for (std::size_t v = 0; v < img.height; ++v)
    for (std::size_t u = 0; u < img.width; ++u) {
      double m = 0;
      switch (plane) {
        case Plane::kXY: m = at(u, v, cz); break;
        case Plane::kYZ: m = at(cx, u, v); break;
        case Plane::kXZ: m = at(u, cy, v); break;
      }
      img.magnitude[v * img.width + u] = m;
    }
  img.pixels = normalize_to_u8(img.magnitude);
  return img;
}

void write_pgm(const std::filesystem::path& path, const FilterImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

template <typename T>
std::vector<FilterImage> export_filter_spectra(SFNet<T>& model, Plane plane,
                                               std::vector<std::size_t> channels,
                                               std::vector<std::size_t> layers,
                                               const std::filesystem::path& out_dir) {
  const std::size_t depth = model.freq.size();
  const std::size_t width = model.geometry().embed;
  if (depth == 0) throw std::invalid_argument("model has no frequency blocks");
  if (layers.empty()) {
    layers.resize(depth);
    std::iota(layers.begin(), layers.end(), 0);
  }
  if (channels.empty()) {
    channels.resize(width);
    std::iota(channels.begin(), channels.end(), 0);
  }
  for (std::size_t l : layers)
    if (l >= depth)
      throw std::out_of_range("layer " + std::to_string(l) + " out of range [0, " +
                              std::to_string(depth) + ")");
  for (std::size_t c : channels)
    if (c >= width)
      throw std::out_of_range("channel " + std::to_string(c) + " out of range [0, " +
                              std::to_string(width) + ")");

  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "filter_spectra.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + (out_dir / "filter_spectra.csv").string());
  csv << "layer,channel,plane,u,v,magnitude\n" << std::setprecision(17);
  std::vector<FilterImage> images;
  for (std::size_t l : layers) {
    auto& blk = model.freq[l];
    for (std::size_t c : channels) {
      FilterImage img = filter_plane_image(blk.filter_real.value, blk.filter_imag.value, blk.grid,
                                           c, plane);
      img.layer = l;
      write_pgm(out_dir / ("filter_L" + std::to_string(l) + "_C" + std::to_string(c) + "_" +
                           plane_name(plane) + ".pgm"),
                img);
      for (std::size_t v = 0; v < img.height; ++v)
        for (std::size_t u = 0; u < img.width; ++u)
          csv << l << ',' << c << ',' << plane_name(plane) << ',' << u << ',' << v << ','
              << img.magnitude[v * img.width + u] << '\n';
      images.push_back(std::move(img));
    }
  }
  return images;
}

template FilterImage filter_plane_image<float>(const Tensor<float>&, const Tensor<float>&,
                                               const spectral::Grid3&, std::size_t, Plane);
template FilterImage filter_plane_image<double>(const Tensor<double>&, const Tensor<double>&,
                                                const spectral::Grid3&, std::size_t, Plane);
template std::vector<FilterImage> export_filter_spectra<float>(SFNet<float>&, Plane,
                                                               std::vector<std::size_t>,
                                                               std::vector<std::size_t>,
                                                               const std::filesystem::path&);
template std::vector<FilterImage> export_filter_spectra<double>(SFNet<double>&, Plane,
                                                                std::vector<std::size_t>,
                                                                std::vector<std::size_t>,
                                                                const std::filesystem::path&);

}  // namespace sfnet::model
