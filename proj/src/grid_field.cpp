#include "twoscale/grid_field.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace twoscale {

GridBox GridBox::unit_domain(int N, std::int64_t cells_per_axis, double length) {
  if (N < 1 || cells_per_axis < 1) throw std::invalid_argument("grid: bad dimensions");
  GridBox b;
  b.N = N;
  b.origin.assign(N, 0);
  b.count.assign(N, cells_per_axis);
  b.h = length / static_cast<double>(cells_per_axis);
  return b;
}

std::int64_t GridBox::size() const {
  std::int64_t s = 1;
  for (auto c : count) s *= c;
  return s;
}

std::int64_t GridBox::stride(int axis) const {
  std::int64_t s = 1;
  for (int i = N - 1; i > axis; --i) s *= count[i];
  return s;
}

std::int64_t GridBox::linear(const std::int64_t* idx) const {
  std::int64_t l = 0;
  for (int i = 0; i < N; ++i) l = l * count[i] + idx[i];
  return l;
}

void GridBox::unravel(std::int64_t lin, std::int64_t* idx) const {
  for (int i = N - 1; i >= 0; --i) {
    idx[i] = lin % count[i];
    lin /= count[i];
  }
}

double GridBox::cell_volume() const { return std::pow(h, N); }

bool GridBox::same_as(const GridBox& o) const {
  return N == o.N && origin == o.origin && count == o.count && h == o.h;
}

GridField::GridField(GridBox bx, int M_, double fill) : box(std::move(bx)), M(M_) {
  if (M < 1) throw std::invalid_argument("grid field: M must be >= 1");
  values.assign(static_cast<std::size_t>(box.size()) * M, fill);
}

GridField::GridField(GridBox bx, const Eigen::VectorXd& constant) : GridField(std::move(bx), static_cast<int>(constant.size())) {
  const std::int64_t n = cells();
  for (std::int64_t i = 0; i < n; ++i)
    for (int k = 0; k < M; ++k) values[i * M + k] = constant[k];
}

bool GridField::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

Eigen::VectorXd GridField::integral() const {
  std::vector<CompensatedSum> acc(M);
  const std::int64_t n = cells();
  for (std::int64_t i = 0; i < n; ++i)
    for (int k = 0; k < M; ++k) acc[k].add(values[i * M + k]);
  Eigen::VectorXd r(M);
  for (int k = 0; k < M; ++k) r[k] = acc[k].value() * box.cell_volume();
  return r;
}

Eigen::VectorXd GridField::mean() const { return integral() / box.volume(); }

namespace {
constexpr char kMagic[4] = {'G', 'F', 'L', 'D'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T take(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("grid file truncated");
  return v;
}
}  // namespace

void write_grid_field(const GridField& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(kMagic, 4);
  put(os, kVersion);
  put(os, static_cast<std::int32_t>(f.box.N));
  put(os, static_cast<std::int32_t>(f.M));
  for (int i = 0; i < f.box.N; ++i) put(os, f.box.count[i]);
  for (int i = 0; i < f.box.N; ++i) put(os, f.box.origin[i]);
  put(os, f.box.h);
  for (int k = 0; k < f.M; ++k) put(os, k < f.a.size() ? f.a[k] : 0.0);
  for (int k = 0; k < f.M; ++k) put(os, k < f.b.size() ? f.b[k] : 0.0);
  os.write(reinterpret_cast<const char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed: " + path);
}

GridField read_grid_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a grid field file: " + path);
  if (take<std::uint32_t>(is) != kVersion) throw std::runtime_error("unsupported grid file version");
  GridBox box;
  box.N = take<std::int32_t>(is);
  const int M = take<std::int32_t>(is);
  if (box.N < 1 || box.N > 8 || M < 1 || M > 64) throw std::runtime_error("corrupt grid file header");
  box.count.resize(box.N);
  box.origin.resize(box.N);
  for (int i = 0; i < box.N; ++i) box.count[i] = take<std::int64_t>(is);
  for (int i = 0; i < box.N; ++i) box.origin[i] = take<std::int64_t>(is);
  box.h = take<double>(is);
  GridField f(box, M);
  f.a.resize(M);
  f.b.resize(M);
  for (int k = 0; k < M; ++k) f.a[k] = take<double>(is);
  for (int k = 0; k < M; ++k) f.b[k] = take<double>(is);
  is.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(double)));
  if (!is) throw std::runtime_error("grid file truncated");
  return f;
}

}  // namespace twoscale
