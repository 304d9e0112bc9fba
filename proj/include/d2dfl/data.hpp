#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2dfl/matrix.hpp"
#include "d2dfl/rng.hpp"

namespace d2dfl {

struct Dataset {
  Matrix features;  // one example per row
  std::vector<int> labels;
  std::size_t classes = 0;
  /// Side length when rows are flattened square images, else 0.
  std::size_t image_side = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  std::span<const double> example(std::size_t i) const { return features.row(i); }

  void validate() const {
    if (features.rows() != labels.size()) throw std::invalid_argument("Dataset: feature/label count mismatch");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= classes) throw std::invalid_argument("Dataset: label out of range");
    for (double x : features.data())
      if (!std::isfinite(x)) throw std::invalid_argument("Dataset: non-finite feature");
  }
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

/// Client index for every example.
struct Partition {
  std::vector<std::size_t> assignment;
  std::size_t clients = 0;

  std::vector<std::vector<std::size_t>> members() const {
    std::vector<std::vector<std::size_t>> out(clients);
    for (std::size_t e = 0; e < assignment.size(); ++e) out[assignment[e]].push_back(e);
    return out;
  }

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> c(clients, 0);
    for (std::size_t a : assignment) ++c[a];
    return c;
  }
};

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> idx) {
  Dataset out;
  out.classes = ds.classes;
  out.image_side = ds.image_side;
  out.features = Matrix(idx.size(), ds.dim());
  out.labels.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = ds.example(idx[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.labels.push_back(ds.labels[idx[r]]);
  }
  return out;
}

inline std::vector<Dataset> split_by_partition(const Dataset& ds, const Partition& part) {
  std::vector<Dataset> out;
  for (const auto& m : part.members()) out.push_back(subset(ds, m));
  return out;
}

namespace detail {

// Labels cycle through the classes so per-class counts differ by at most one,
// then the order is shuffled.
inline std::vector<int> balanced_labels(std::size_t count, std::size_t classes, Engine& rng) {
  std::vector<int> y(count);
  for (std::size_t i = 0; i < count; ++i) y[i] = static_cast<int>(i % classes);
  std::shuffle(y.begin(), y.end(), rng);
  return y;
}

}  // namespace detail

/// Gaussian class clusters: class means drawn on a sphere of radius
/// `separation`, unit isotropic noise. Train and test share the means.
inline SplitDataset synthetic_dataset(std::size_t dim, std::size_t classes, std::size_t train_count,
                                      std::size_t test_count, double separation, Engine& rng) {
  if (classes < 2) throw std::invalid_argument("synthetic_dataset: need at least two classes");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix means(classes, dim);
  for (std::size_t c = 0; c < classes; ++c) {
    double norm = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      means(c, k) = normal(rng);
      norm += means(c, k) * means(c, k);
    }
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < dim; ++k) means(c, k) *= separation / norm;
  }
  auto make = [&](std::size_t count) {
    Dataset ds;
    ds.classes = classes;
    ds.labels = detail::balanced_labels(count, classes, rng);
    ds.features = Matrix(count, dim);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t k = 0; k < dim; ++k)
        ds.features(i, k) = means(static_cast<std::size_t>(ds.labels[i]), k) + normal(rng);
    return ds;
  };
  SplitDataset out;
  out.train = make(train_count);
  out.test = make(test_count);
  return out;
}

inline constexpr std::size_t digit_side = 8;

namespace detail {

// 5x7 glyphs for 0-9.
inline constexpr std::array<std::array<const char*, 7>, 10> digit_glyphs{{
    {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."},
    {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},
    {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"},
    {"####.", "....#", "....#", ".###.", "....#", "....#", "####."},
    {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."},
    {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."},
    {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."},
    {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."},
    {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."},
    {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."},
}};

}  // namespace detail

/// 8x8 grayscale digit-like images: a glyph at a random one-pixel offset,
/// random stroke intensity, additive Gaussian pixel noise.
inline SplitDataset digit_images(std::size_t train_count, std::size_t test_count, double noise, Engine& rng) {
  std::uniform_int_distribution<int> shift(0, 1);
  std::uniform_real_distribution<double> intensity(0.7, 1.0);
  std::normal_distribution<double> pixel_noise(0.0, noise);
  auto make = [&](std::size_t count) {
    Dataset ds;
    ds.classes = 10;
    ds.image_side = digit_side;
    ds.labels = detail::balanced_labels(count, 10, rng);
    ds.features = Matrix(count, digit_side * digit_side);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& glyph = detail::digit_glyphs[static_cast<std::size_t>(ds.labels[i])];
      const int dr = shift(rng), dc = 1 + shift(rng);
      const double level = intensity(rng);
      auto row = ds.features.row(i);
      for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 5; ++c)
          if (glyph[static_cast<std::size_t>(r)][c] == '#')
            row[static_cast<std::size_t>((r + dr) * 8 + (c + dc))] = level;
      for (double& px : row) px += pixel_noise(rng);
    }
    return ds;
  };
  SplitDataset out;
  out.train = make(train_count);
  out.test = make(test_count);
  return out;
}

/// Label skew: for every class, client shares ~ Dirichlet(alpha * 1_N).
/// Clients left empty take one example from the currently largest client.
inline Partition dirichlet_partition(const Dataset& ds, std::size_t clients, double alpha, Engine& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet_partition: alpha must be positive");
  if (clients < 1) throw std::invalid_argument("dirichlet_partition: need at least one client");
  Partition part{std::vector<std::size_t>(ds.size(), 0), clients};
  if (clients == 1) return part;

  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t e = 0; e < ds.size(); ++e) by_class[static_cast<std::size_t>(ds.labels[e])].push_back(e);

  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> share(clients);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    double total = 0.0;
    for (double& s : share) {
      s = gamma(rng);
      total += s;
    }
    if (!(total > 0.0)) {
      // every gamma draw underflowed; give the class to one client
      std::fill(share.begin(), share.end(), 0.0);
      share[std::uniform_int_distribution<std::size_t>(0, clients - 1)(rng)] = 1.0;
      total = 1.0;
    }
    const std::size_t nc = members.size();
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t c = 0; c < clients; ++c) {
      cum += share[c] / total;
      const std::size_t end =
          c + 1 == clients ? nc : std::min(nc, static_cast<std::size_t>(std::floor(cum * static_cast<double>(nc))));
      for (std::size_t k = start; k < end; ++k) part.assignment[members[k]] = c;
      start = std::max(start, end);
    }
  }

  for (;;) {
    auto counts = part.counts();
    auto empty = std::find(counts.begin(), counts.end(), std::size_t{0});
    if (empty == counts.end()) break;
    const auto largest = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    if (counts[largest] <= 1) throw std::invalid_argument("dirichlet_partition: fewer examples than clients");
    // move the last example (by index) of the largest client
    for (std::size_t e = part.assignment.size(); e-- > 0;)
      if (part.assignment[e] == largest) {
        part.assignment[e] = static_cast<std::size_t>(empty - counts.begin());
        break;
      }
  }
  return part;
}

/// Uniformly shuffled, round-robin split.
inline Partition iid_partition(const Dataset& ds, std::size_t clients, Engine& rng) {
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  Partition part{std::vector<std::size_t>(ds.size(), 0), clients};
  for (std::size_t k = 0; k < order.size(); ++k) part.assignment[order[k]] = k % clients;
  return part;
}

/// Exact clockwise quarter turn of a square image.
inline std::vector<double> rotate90_cw(std::span<const double> img, std::size_t side) {
  std::vector<double> out(side * side);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) out[r * side + c] = img[(side - 1 - c) * side + r];
  return out;
}

/// Clockwise rotation about the image centre with bilinear interpolation;
/// samples falling outside the source read as zero.
inline std::vector<double> rotate_image(std::span<const double> img, std::size_t side, double degrees) {
  if (img.size() != side * side) throw std::invalid_argument("rotate_image: feature size is not side^2");
  const double a = degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double centre = (static_cast<double>(side) - 1.0) / 2.0;
  const auto s = static_cast<long>(side);
  auto px = [&](long r, long c) -> double {
    if (r < 0 || c < 0 || r >= s || c >= s) return 0.0;
    return img[static_cast<std::size_t>(r * s + c)];
  };
  auto snap = [](double v) {
    const double rounded = std::round(v);
    return std::abs(v - rounded) < 1e-9 ? rounded : v;
  };
  std::vector<double> out(side * side, 0.0);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double x = static_cast<double>(c) - centre;
      const double y = static_cast<double>(r) - centre;
      // inverse map (counter-clockwise) into the source image; y points down
      const double sc = snap(x * ca + y * sa + centre);
      const double sr = snap(-x * sa + y * ca + centre);
      const double r0 = std::floor(sr), c0 = std::floor(sc);
      const double fr = sr - r0, fc = sc - c0;
      const long ir = static_cast<long>(r0), ic = static_cast<long>(c0);
      double v = (1 - fr) * (1 - fc) * px(ir, ic);
      if (fc > 0) v += (1 - fr) * fc * px(ir, ic + 1);
      if (fr > 0) v += fr * (1 - fc) * px(ir + 1, ic);
      if (fr > 0 && fc > 0) v += fr * fc * px(ir + 1, ic + 1);
      out[r * side + c] = v;
    }
  return out;
}

/// Angle for client i when N clients evenly span a full turn.
inline double rotation_angle(std::size_t client, std::size_t clients) {
  return 360.0 / static_cast<double>(clients) * static_cast<double>(client);
}

namespace detail {

inline void require_square(const Dataset& ds) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(ds.dim()))));
  if (ds.image_side == 0 || side * side != ds.dim() || side != ds.image_side)
    throw std::invalid_argument("rotation partition needs square image features");
}

}  // namespace detail

/// Feature skew: examples are dealt to clients one by one and client i's
/// shard is rotated clockwise by rotation_angle(i, N).
inline std::vector<Dataset> rotation_partition(const Dataset& ds, std::size_t clients) {
  detail::require_square(ds);
  if (clients < 1) throw std::invalid_argument("rotation_partition: need at least one client");
  std::vector<std::vector<std::size_t>> members(clients);
  for (std::size_t e = 0; e < ds.size(); ++e) members[e % clients].push_back(e);
  std::vector<Dataset> out;
  for (std::size_t i = 0; i < clients; ++i) {
    Dataset shard = subset(ds, members[i]);
    const double angle = rotation_angle(i, clients);
    for (std::size_t r = 0; r < shard.size(); ++r) {
      auto row = shard.features.row(r);
      const auto rotated = rotate_image(row, ds.image_side, angle);
      std::copy(rotated.begin(), rotated.end(), row.begin());
    }
    out.push_back(std::move(shard));
  }
  return out;
}

/// The union distribution of rotation_partition as one dataset: example e is
/// rotated by the angle of client e mod N.
inline Dataset rotation_union(const Dataset& ds, std::size_t clients) {
  detail::require_square(ds);
  Dataset out = ds;
  for (std::size_t e = 0; e < out.size(); ++e) {
    auto row = out.features.row(e);
    const auto rotated = rotate_image(row, ds.image_side, rotation_angle(e % clients, clients));
    std::copy(rotated.begin(), rotated.end(), row.begin());
  }
  return out;
}

/// Row i: label distribution of client i.
inline Matrix label_histograms(std::span<const Dataset> clients, std::size_t classes) {
  Matrix h(clients.size(), classes);
  for (std::size_t i = 0; i < clients.size(); ++i) {
    for (int y : clients[i].labels) h(i, static_cast<std::size_t>(y)) += 1.0;
    const double n = static_cast<double>(clients[i].size());
    if (n > 0)
      for (std::size_t c = 0; c < classes; ++c) h(i, c) /= n;
  }
  return h;
}

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> values;
};

/// Reads an unsigned-byte IDX file (big-endian header).
inline IdxArray read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open IDX file: " + path);
  std::array<unsigned char, 4> magic{};
  in.read(reinterpret_cast<char*>(magic.data()), 4);
  if (!in || magic[0] != 0 || magic[1] != 0) throw std::runtime_error("bad IDX magic: " + path);
  if (magic[2] != 0x08) throw std::runtime_error("unsupported IDX element type (only unsigned byte): " + path);
  IdxArray arr;
  std::size_t total = 1;
  for (int k = 0; k < magic[3]; ++k) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) throw std::runtime_error("truncated IDX header: " + path);
    const std::uint32_t d = (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
    arr.dims.push_back(d);
    total *= d;
  }
  arr.values.resize(total);
  in.read(reinterpret_cast<char*>(arr.values.data()), static_cast<std::streamsize>(total));
  if (static_cast<std::size_t>(in.gcount()) != total) throw std::runtime_error("truncated IDX payload: " + path);
  return arr;
}

/// Images scaled to [0, 1]; labels taken as-is. Class count is max label + 1
/// unless `classes` is given.
inline Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                std::size_t classes = 0) {
  const IdxArray images = read_idx(images_path);
  const IdxArray labels = read_idx(labels_path);
  if (images.dims.empty() || labels.dims.size() != 1 || labels.dims[0] != images.dims[0])
    throw std::runtime_error("IDX image/label count mismatch");
  const std::size_t count = images.dims[0];
  const std::size_t dim = count ? images.values.size() / count : 0;
  Dataset ds;
  ds.features = Matrix(count, dim);
  for (std::size_t k = 0; k < images.values.size(); ++k) ds.features.data()[k] = images.values[k] / 255.0;
  std::size_t max_label = 0;
  for (auto v : labels.values) {
    ds.labels.push_back(v);
    max_label = std::max<std::size_t>(max_label, v);
  }
  ds.classes = classes ? classes : max_label + 1;
  if (images.dims.size() == 3 && images.dims[1] == images.dims[2]) ds.image_side = images.dims[1];
  ds.validate();
  return ds;
}

}  // namespace d2dfl
