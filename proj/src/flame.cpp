#include "neutart/flame.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

#include "neutart/errors.hpp"

namespace neutart::flame {

using num::NodePtr;
using num::Tensor;

namespace {

constexpr char kMagic[8] = {'N', 'T', 'F', 'A', '0', '0', '0', '1'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc32(const unsigned char* data, size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& buf, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

// Cursor over a fully loaded file; reads past the end report where they fell.
struct ByteReader {
  const std::vector<unsigned char>& buf;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n) const {
    if (pos + n > buf.size())
      throw DataError("model asset: truncated file " + path + " (need " + std::to_string(n) +
                      " more bytes at byte offset " + std::to_string(pos) + ", file has " +
                      std::to_string(buf.size()) + ")");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
  Tensor tensor(std::vector<long> shape) {
    long total = 1;
    for (long d : shape) total *= d;
    std::vector<double> data(static_cast<size_t>(total));
    for (auto& v : data) v = f64();
    return Tensor::from_data(std::move(shape), std::move(data));
  }
};

void check_count(const std::string& field, long got, long want) {
  if (got != want)
    throw DataError("model asset: dimension mismatch for " + field + " (expected " +
                    std::to_string(want) + " values, got " + std::to_string(got) + ")");
}

void validate_dims(const FlameAsset& a, const std::string& where) {
  if (a.vertex_count < 1 || a.expr_count < 1 || a.identity_count < 1)
    throw DataError("model asset: " + where + ": empty basis dimensions");
  check_count("template_vertices", a.template_vertices.size(), a.vertex_count * 3);
  check_count("expression_basis", a.expression_basis.size(),
              a.vertex_count * 3 * a.expr_count);
  check_count("shape_basis", a.shape_basis.size(), a.vertex_count * 3 * a.identity_count);
  check_count("jaw_weights", a.jaw_weights.size(), a.vertex_count);
  check_count("jaw_joint_position", a.jaw_joint.size(), 3);
}

// Loader-side checks; the writer only enforces dimensions so that a round
// trip cannot silently repair a bad asset.
void validate_contents(const FlameAsset& a, const std::string& where) {
  for (long v = 0; v < a.vertex_count; ++v) {
    double w = a.jaw_weights[v];
    if (!(w >= 0.0 && w <= 1.0))
      throw DataError("model asset: " + where + ": skinning weight out of range (vertex " +
                      std::to_string(v) + ": " + std::to_string(w) + ")");
  }
  for (size_t i = 0; i < a.lip_landmark_ids.size(); ++i) {
    long id = a.lip_landmark_ids[i];
    if (id < 0 || id >= a.vertex_count)
      throw DataError("model asset: " + where + ": lip landmark id out of range (entry " +
                      std::to_string(i) + ": " + std::to_string(id) + ")");
  }
  if (!a.template_vertices.all_finite() || !a.expression_basis.all_finite() ||
      !a.shape_basis.all_finite() || !a.jaw_joint.all_finite())
    throw DataError("model asset: " + where + ": non-finite value");
}

} // namespace

void save_flame_asset(const std::string& path, const FlameAsset& asset) {
  validate_dims(asset, path);
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + sizeof(kMagic));
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(asset.vertex_count));
  put_u32(buf, static_cast<std::uint32_t>(asset.expr_count));
  put_u32(buf, static_cast<std::uint32_t>(asset.identity_count));
  put_u32(buf, static_cast<std::uint32_t>(asset.lip_landmark_ids.size()));
  for (double v : asset.template_vertices.data()) put_f64(buf, v);
  for (double v : asset.expression_basis.data()) put_f64(buf, v);
  for (double v : asset.shape_basis.data()) put_f64(buf, v);
  for (double v : asset.jaw_weights.data()) put_f64(buf, v);
  for (double v : asset.jaw_joint.data()) put_f64(buf, v);
  for (long id : asset.lip_landmark_ids) put_u32(buf, static_cast<std::uint32_t>(id));
  put_u32(buf, crc32(buf.data(), buf.size()));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("model asset: cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("model asset: write failed for " + path);
}

FlameAsset load_flame_asset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("model asset: cannot open " + path);
  std::vector<unsigned char> buf{std::istreambuf_iterator<char>(is),
                                 std::istreambuf_iterator<char>()};
  ByteReader rd{buf, 0, path};
  rd.need(sizeof(kMagic));
  if (!std::equal(kMagic, kMagic + sizeof(kMagic), buf.begin()))
    throw DataError("model asset: bad magic in " + path);
  rd.pos = sizeof(kMagic);
  std::uint32_t version = rd.u32();
  if (version != kVersion)
    throw DataError("model asset: unsupported version " + std::to_string(version) + " in " + path);
  FlameAsset a;
  a.vertex_count = static_cast<long>(rd.u32());
  a.expr_count = static_cast<long>(rd.u32());
  a.identity_count = static_cast<long>(rd.u32());
  long lip_count = static_cast<long>(rd.u32());
  if (a.vertex_count < 1 || a.expr_count < 1 || a.identity_count < 1 || lip_count < 0)
    throw DataError("model asset: invalid header dimensions in " + path);

  // The payload size is fully determined by the header; verify the checksum
  // before trusting any array contents, but only once all bytes are present.
  size_t payload = sizeof(kMagic) + 5 * 4 +
                   8 * static_cast<size_t>(a.vertex_count * 3 * (1 + a.expr_count + a.identity_count) +
                                           a.vertex_count + 3) +
                   4 * static_cast<size_t>(lip_count);
  if (buf.size() < payload + 4) {
    rd.pos = buf.size();
    throw DataError("model asset: truncated file " + path + " (expected " +
                    std::to_string(payload + 4) + " bytes, reading failed at byte offset " +
                    std::to_string(buf.size()) + ")");
  }
  std::uint32_t stored = static_cast<std::uint32_t>(buf[payload]) |
                         static_cast<std::uint32_t>(buf[payload + 1]) << 8 |
                         static_cast<std::uint32_t>(buf[payload + 2]) << 16 |
                         static_cast<std::uint32_t>(buf[payload + 3]) << 24;
  if (crc32(buf.data(), payload) != stored)
    throw DataError("model asset: checksum mismatch in " + path);

  a.template_vertices = rd.tensor({a.vertex_count, 3});
  a.expression_basis = rd.tensor({a.vertex_count, 3, a.expr_count});
  a.shape_basis = rd.tensor({a.vertex_count, 3, a.identity_count});
  a.jaw_weights = rd.tensor({a.vertex_count});
  a.jaw_joint = rd.tensor({3});
  a.lip_landmark_ids.resize(static_cast<size_t>(lip_count));
  for (auto& id : a.lip_landmark_ids) id = static_cast<long>(rd.u32());
  validate_dims(a, path);
  validate_contents(a, path);
  return a;
}

namespace {

constexpr char kFramesMagic[8] = {'N', 'T', 'F', 'F', '0', '0', '0', '1'};

void validate_frames(const FlameFrameSequence& seq, const std::string& where) {
  if (seq.frames.size() > 0 && seq.frames.cols() != kFlameChannels)
    throw DataError("frame track: " + where + ": expected " + std::to_string(kFlameChannels) +
                    " channels, got " + seq.frames.shape_str());
  if (!seq.frames.all_finite() || !seq.identity_beta.all_finite())
    throw DataError("frame track: " + where + ": non-finite value");
  for (long t = 0; t < seq.frames.rows(); ++t) {
    double tx = seq.frames.at(t, 0), ty = seq.frames.at(t, 1), tz = seq.frames.at(t, 2);
    double n = std::sqrt(tx * tx + ty * ty + tz * tz);
    if (n >= std::numbers::pi)
      throw DataError("frame track: " + where + ": jaw pose norm " + std::to_string(n) +
                      " at frame " + std::to_string(t) + " is not below pi");
  }
}

} // namespace

void save_flame_frames(const std::string& path, const FlameFrameSequence& seq) {
  validate_frames(seq, path);
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kFramesMagic, kFramesMagic + sizeof(kFramesMagic));
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(seq.frames.rows()));
  put_u32(buf, static_cast<std::uint32_t>(kFlameChannels));
  put_u32(buf, static_cast<std::uint32_t>(seq.identity_beta.size()));
  for (double v : seq.frames.data()) put_f64(buf, v);
  for (double v : seq.identity_beta.data()) put_f64(buf, v);
  put_u32(buf, crc32(buf.data(), buf.size()));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("frame track: cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("frame track: write failed for " + path);
}

FlameFrameSequence load_flame_frames(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("frame track: cannot open " + path);
  std::vector<unsigned char> buf{std::istreambuf_iterator<char>(is),
                                 std::istreambuf_iterator<char>()};
  ByteReader rd{buf, 0, path};
  rd.need(sizeof(kFramesMagic));
  if (!std::equal(kFramesMagic, kFramesMagic + sizeof(kFramesMagic), buf.begin()))
    throw DataError("frame track: bad magic in " + path);
  rd.pos = sizeof(kFramesMagic);
  if (rd.u32() != kVersion) throw DataError("frame track: unsupported version in " + path);
  long frames = static_cast<long>(rd.u32());
  long channels = static_cast<long>(rd.u32());
  long beta_len = static_cast<long>(rd.u32());
  if (channels != kFlameChannels)
    throw DataError("frame track: expected " + std::to_string(kFlameChannels) +
                    " channels, got " + std::to_string(channels) + " in " + path);
  size_t payload = sizeof(kFramesMagic) + 4 * 4 +
                   8 * static_cast<size_t>(frames * channels + beta_len);
  if (buf.size() < payload + 4)
    throw DataError("frame track: truncated file " + path + " (expected " +
                    std::to_string(payload + 4) + " bytes, reading failed at byte offset " +
                    std::to_string(buf.size()) + ")");
  std::uint32_t stored = static_cast<std::uint32_t>(buf[payload]) |
                         static_cast<std::uint32_t>(buf[payload + 1]) << 8 |
                         static_cast<std::uint32_t>(buf[payload + 2]) << 16 |
                         static_cast<std::uint32_t>(buf[payload + 3]) << 24;
  if (crc32(buf.data(), payload) != stored)
    throw DataError("frame track: checksum mismatch in " + path);
  FlameFrameSequence seq;
  seq.frames = rd.tensor({frames, channels});
  seq.identity_beta = rd.tensor({beta_len});
  validate_frames(seq, path);
  return seq;
}

FlameAsset make_synthetic_asset() {
  constexpr long kGrid = 10;
  constexpr double kPi = std::numbers::pi;
  FlameAsset a;
  a.vertex_count = kGrid * kGrid;
  a.expr_count = kExpressionChannels;
  a.identity_count = 5;
  a.template_vertices = Tensor({a.vertex_count, 3});
  a.expression_basis = Tensor({a.vertex_count, 3, a.expr_count});
  a.shape_basis = Tensor({a.vertex_count, 3, a.identity_count});
  a.jaw_weights = Tensor({a.vertex_count});
  for (long r = 0; r < kGrid; ++r) {
    for (long c = 0; c < kGrid; ++c) {
      long v = r * kGrid + c;
      double x = -0.45 + 0.1 * static_cast<double>(c);
      double y = -0.5 + 0.1 * static_cast<double>(r);
      double z = 0.1 * std::cos(kPi * x) * std::cos(0.8 * kPi * y);
      a.template_vertices.at(v, 0) = x;
      a.template_vertices.at(v, 1) = y;
      a.template_vertices.at(v, 2) = z;
      // Rigid jaw below the lower lip line, static above the upper lip line.
      a.jaw_weights[v] = std::clamp((-0.1 - y) / 0.1, 0.0, 1.0);
      const double axis_gain[3] = {0.4, 1.0, 0.55};
      for (long axis = 0; axis < 3; ++axis) {
        for (long e = 0; e < a.expr_count; ++e) {
          double fx = 0.25 + 0.05 * static_cast<double>(e % 7);
          double fy = 0.2 + 0.04 * static_cast<double>(e % 5);
          double ph = 0.37 * static_cast<double>(e) + 0.9 * static_cast<double>(axis);
          a.expression_basis[(v * 3 + axis) * a.expr_count + e] =
              0.01 * axis_gain[axis] * std::sin(2.0 * kPi * (fx * x + fy * y) + ph);
        }
        for (long k = 0; k < a.identity_count; ++k) {
          double fx = 0.15 + 0.09 * static_cast<double>(k);
          double ph = 0.61 * static_cast<double>(k) + 0.5 * static_cast<double>(axis);
          a.shape_basis[(v * 3 + axis) * a.identity_count + k] =
              0.02 * std::sin(2.0 * kPi * fx * (x + 0.7 * y) + ph);
        }
      }
    }
  }
  a.jaw_joint = Tensor::from_data({3}, {0.0, -0.15, -0.4});
  // Landmarks: upper lip row (y = -0.1) then lower lip row (y = -0.2).
  for (long c = 0; c < kGrid; ++c) a.lip_landmark_ids.push_back(4 * kGrid + c);
  for (long c = 0; c < kGrid; ++c) a.lip_landmark_ids.push_back(3 * kGrid + c);
  return a;
}

num::Tensor rodrigues(double tx, double ty, double tz) {
  double n2 = tx * tx + ty * ty + tz * tz;
  Tensor r({3, 3});
  r.at(0, 0) = r.at(1, 1) = r.at(2, 2) = 1.0;
  if (n2 < 1e-24) return r;
  double n = std::sqrt(n2);
  double s = std::sin(n) / n;
  double c = (1.0 - std::cos(n)) / n2;
  // R = I + s*K + c*K^2 with K the cross-product matrix of (tx, ty, tz).
  double k[3][3] = {{0, -tz, ty}, {tz, 0, -tx}, {-ty, tx, 0}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double k2 = 0.0;
      for (int m = 0; m < 3; ++m) k2 += k[i][m] * k[m][j];
      r.at(i, j) += s * k[i][j] + c * k2;
    }
  return r;
}

FaceMesh decode_mesh(const num::Tensor& frame53, const num::Tensor& beta,
                     const FlameAsset& asset) {
  if (frame53.size() != kFlameChannels)
    throw ShapeError("decode_mesh: frame must have " + std::to_string(kFlameChannels) +
                     " channels, got " + frame53.shape_str());
  if (beta.size() != asset.identity_count)
    throw ShapeError("decode_mesh: identity vector must have " +
                     std::to_string(asset.identity_count) + " entries, got " + beta.shape_str());
  if (!frame53.all_finite() || !beta.all_finite())
    throw NumericError("decode_mesh: non-finite coefficient");

  long V = asset.vertex_count;
  FaceMesh mesh;
  mesh.vertices = asset.template_vertices;
  for (long v = 0; v < V; ++v) {
    for (long axis = 0; axis < 3; ++axis) {
      double off = 0.0;
      const long base = v * 3 + axis;
      for (long k = 0; k < asset.identity_count; ++k)
        off += asset.shape_basis[base * asset.identity_count + k] * beta[k];
      for (long e = 0; e < asset.expr_count; ++e)
        off += asset.expression_basis[base * asset.expr_count + e] * frame53[kJawChannels + e];
      mesh.vertices.at(v, axis) += off;
    }
  }

  double tx = frame53[0], ty = frame53[1], tz = frame53[2];
  if (tx * tx + ty * ty + tz * tz < 1e-24) return mesh; // zero pose is the identity map
  Tensor r = rodrigues(tx, ty, tz);
  const Tensor& j = asset.jaw_joint;
  for (long v = 0; v < V; ++v) {
    double w = asset.jaw_weights[v];
    double p[3] = {mesh.vertices.at(v, 0), mesh.vertices.at(v, 1), mesh.vertices.at(v, 2)};
    double u[3] = {p[0] - j[0], p[1] - j[1], p[2] - j[2]};
    for (long axis = 0; axis < 3; ++axis) {
      double ru = r.at(axis, 0) * u[0] + r.at(axis, 1) * u[1] + r.at(axis, 2) * u[2];
      mesh.vertices.at(v, axis) = w * (ru + j[axis]) + (1.0 - w) * p[axis];
    }
  }
  return mesh;
}

num::Tensor lip_landmarks(const FaceMesh& mesh, const FlameAsset& asset) {
  long L = static_cast<long>(asset.lip_landmark_ids.size());
  Tensor out({L, 3});
  for (long l = 0; l < L; ++l) {
    long id = asset.lip_landmark_ids[static_cast<size_t>(l)];
    if (id < 0 || id >= mesh.vertices.rows())
      throw ShapeError("lip_landmarks: landmark id " + std::to_string(id) +
                       " outside mesh with " + std::to_string(mesh.vertices.rows()) + " vertices");
    for (long axis = 0; axis < 3; ++axis) out.at(l, axis) = mesh.vertices.at(id, axis);
  }
  return out;
}

LipDecodeContext make_lip_context(const FlameAsset& asset, const num::Tensor& beta) {
  if (beta.size() != asset.identity_count)
    throw ShapeError("make_lip_context: identity vector must have " +
                     std::to_string(asset.identity_count) + " entries, got " + beta.shape_str());
  long L = static_cast<long>(asset.lip_landmark_ids.size());
  LipDecodeContext ctx;
  ctx.landmark_count = L;
  ctx.base = Tensor({L, 3});
  Tensor basis({asset.expr_count, 3 * L});
  for (long l = 0; l < L; ++l) {
    long id = asset.lip_landmark_ids[static_cast<size_t>(l)];
    for (long axis = 0; axis < 3; ++axis) {
      const long row = id * 3 + axis;
      double p = asset.template_vertices.at(id, axis);
      for (long k = 0; k < asset.identity_count; ++k)
        p += asset.shape_basis[row * asset.identity_count + k] * beta[k];
      ctx.base.at(l, axis) = p;
      for (long e = 0; e < asset.expr_count; ++e)
        basis.at(e, l * 3 + axis) = asset.expression_basis[row * asset.expr_count + e];
    }
  }
  ctx.expr_basis = num::constant(std::move(basis));
  ctx.weights = Tensor({L});
  for (long l = 0; l < L; ++l)
    ctx.weights[l] = asset.jaw_weights[asset.lip_landmark_ids[static_cast<size_t>(l)]];
  ctx.joint = asset.jaw_joint;
  return ctx;
}

namespace {

// theta x m, row-wise, with scalar-node axis components.
NodePtr cross_rows(const NodePtr& tx, const NodePtr& ty, const NodePtr& tz,
                   const NodePtr& m) {
  long L = m->value.rows();
  auto ux = num::slice(m, 0, L, 0, 1);
  auto uy = num::slice(m, 0, L, 1, 2);
  auto uz = num::slice(m, 0, L, 2, 3);
  auto cx = num::sub(num::mul(ty, uz), num::mul(tz, uy));
  auto cy = num::sub(num::mul(tz, ux), num::mul(tx, uz));
  auto cz = num::sub(num::mul(tx, uy), num::mul(ty, ux));
  return num::concat(num::concat(cx, cy, 1), cz, 1);
}

} // namespace

num::NodePtr decode_lip_landmarks(const LipDecodeContext& ctx, const num::NodePtr& frame) {
  if (frame->value.size() != kFlameChannels)
    throw ShapeError("decode_lip_landmarks: frame must have " +
                     std::to_string(kFlameChannels) + " channels, got " +
                     frame->value.shape_str());
  long L = ctx.landmark_count;
  auto f = num::reshape(frame, {1, kFlameChannels});
  auto psi = num::slice(f, 0, 1, kJawChannels, kFlameChannels);
  auto pos = num::add(num::reshape(num::matmul(psi, ctx.expr_basis), {L, 3}),
                      num::constant(ctx.base));

  auto tx = num::slice(f, 0, 1, 0, 1);
  auto ty = num::slice(f, 0, 1, 1, 2);
  auto tz = num::slice(f, 0, 1, 2, 3);
  // Smoothed axis-angle norm; the epsilon keeps the graph differentiable at
  // theta = 0 while perturbing the rotation by less than 1e-12 radians.
  auto n2 = num::add(num::add(num::square(tx), num::square(ty)), num::square(tz));
  auto n = num::sqrt(num::add(n2, 1e-12));
  auto s = num::div(num::sin(n), n);
  auto c = num::div(num::sub(1.0, num::cos(n)), num::mul(n, n));

  Tensor neg_joint = ctx.joint;
  for (long i = 0; i < 3; ++i) neg_joint[i] = -neg_joint[i];
  auto u = num::add_row_bias(pos, num::constant(std::move(neg_joint)));
  auto k1 = cross_rows(tx, ty, tz, u);
  auto k2 = cross_rows(tx, ty, tz, k1);
  auto ru = num::add(u, num::add(num::mul(k1, s), num::mul(k2, c)));
  auto rotated = num::add_row_bias(ru, num::constant(ctx.joint));

  Tensor wmat({L, 3}), vmat({L, 3});
  for (long l = 0; l < L; ++l)
    for (long axis = 0; axis < 3; ++axis) {
      wmat.at(l, axis) = ctx.weights[l];
      vmat.at(l, axis) = 1.0 - ctx.weights[l];
    }
  return num::add(num::mul(num::constant(std::move(wmat)), rotated),
                  num::mul(num::constant(std::move(vmat)), pos));
}

} // namespace neutart::flame
