#pragma once

// Frequency-response images of learned global filters. The full spectrum is
// rebuilt from the stored half, centered with fftshift (low frequencies in the
// middle) and sliced through the center along the requested plane.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfnet/model/sfnet.hpp"

namespace sfnet::model {

enum class Plane { kXY, kYZ, kXZ };

Plane parse_plane(const std::string& s);
std::string plane_name(Plane p);

struct FilterImage {
  std::size_t layer = 0;
  std::size_t channel = 0;
  Plane plane = Plane::kXY;
  std::size_t width = 0;   // extent of the first plane axis (u)
  std::size_t height = 0;  // extent of the second plane axis (v)
  std::vector<double> magnitude;  // row-major, index v * width + u
  std::vector<std::uint8_t> pixels;
};

/// Linear map of [min, max] onto [0, 255] with rounding; a constant field maps to 0.
std::vector<std::uint8_t> normalize_to_u8(const std::vector<double>& values);

/// Central slice of the centered magnitude spectrum of one filter channel.
/// filter_re / filter_im: [D, Gx, Gy, Gz/2 + 1].
template <typename T>
FilterImage filter_plane_image(const Tensor<T>& filter_re, const Tensor<T>& filter_im,
                               const spectral::Grid3& grid, std::size_t channel, Plane plane);

void write_pgm(const std::filesystem::path& path, const FilterImage& image);

/// Writes filter_L{layer}_C{channel}_{plane}.pgm for every selection plus
/// filter_spectra.csv (layer,channel,plane,u,v,magnitude). Empty selections
/// mean every layer / channel.
template <typename T>
std::vector<FilterImage> export_filter_spectra(SFNet<T>& model, Plane plane,
                                               std::vector<std::size_t> channels,
                                               std::vector<std::size_t> layers,
                                               const std::filesystem::path& out_dir);

}  // namespace sfnet::model
