#include "deforma/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace deforma {

FieldParams FieldParams::zeros_like() const {
  FieldParams z;
  z.template_params.assign(template_params.size(), 0.0);
  z.deform_params.assign(deform_params.size(), 0.0);
  z.manifold_params.assign(manifold_params.size(), 0.0);
  return z;
}

void FieldParams::add(const FieldParams& other) {
  if (other.template_params.size() != template_params.size() || other.deform_params.size() != deform_params.size() ||
      other.manifold_params.size() != manifold_params.size()) {
    throw InvalidArgument("parameter shapes differ");
  }
  for (std::size_t i = 0; i < template_params.size(); ++i) template_params[i] += other.template_params[i];
  for (std::size_t i = 0; i < deform_params.size(); ++i) deform_params[i] += other.deform_params[i];
  for (std::size_t i = 0; i < manifold_params.size(); ++i) manifold_params[i] += other.manifold_params[i];
}

FieldModel::FieldModel(FieldConfig config)
    : config_(std::move(config)),
      templ_(config_.templ, config_.dims),
      deform_(config_.deform, config_.dims),
      manifold_(config_.manifold) {}

FieldParams FieldModel::init(std::uint64_t seed, const InitOptions& options) const {
  std::mt19937_64 rng(seed);
  FieldParams p;
  p.template_params = templ_.init(rng, options.zero_template_output, options.occupancy_bias);
  p.deform_params = deform_.init(rng, options.zero_deform_output);
  p.manifold_params = manifold_.init(rng, options.zero_manifold_output);
  return p;
}

void FieldModel::check(const FieldParams& params) const {
  if (params.template_params.size() != templ_.param_count() || params.deform_params.size() != deform_.param_count() ||
      params.manifold_params.size() != manifold_.param_count()) {
    throw InvalidArgument("parameter vectors do not match the field architecture");
  }
}

FieldSet FieldModel::bind(const FieldParams& params, FieldParams* grads) const {
  check(params);
  if (grads != nullptr) check(*grads);
  FieldSet f;
  f.manifold = &manifold_;
  f.deform = &deform_;
  f.radiance = &templ_;
  f.template_params.value = params.template_params;
  f.deform_params.value = params.deform_params;
  f.manifold_params.value = params.manifold_params;
  if (grads != nullptr) {
    f.template_params.grad = grads->template_params;
    f.deform_params.grad = grads->deform_params;
    f.manifold_params.grad = grads->manifold_params;
  }
  return f;
}

namespace {

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_floating_point_v<T>) {
      s += real(values[i]);
    } else {
      s += values[i];
    }
  }
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

double parse_real(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw CheckpointError("checkpoint header: bad number '" + s + "'");
  }
  if (used != s.size()) throw CheckpointError("checkpoint header: bad number '" + s + "'");
  return v;
}

int parse_int(const std::string& s) {
  const double v = parse_real(s);
  if (v != static_cast<int>(v)) throw CheckpointError("checkpoint header: expected an integer, got '" + s + "'");
  return static_cast<int>(v);
}

std::vector<std::string> fields_of(const std::map<std::string, std::string>& kv, const std::string& key,
                                   std::size_t count) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw CheckpointError("checkpoint header: missing '" + key + "'");
  auto parts = split(it->second, ',');
  if (count != 0 && parts.size() != count) {
    throw CheckpointError("checkpoint header: '" + key + "' needs " + std::to_string(count) + " fields");
  }
  return parts;
}

void put_double(std::string& out, double v) {
  unsigned char b[8];
  std::memcpy(b, &v, 8);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 8);
  out.append(reinterpret_cast<const char*>(b), 8);
}

double get_double(const char* p) {
  unsigned char b[8];
  std::memcpy(b, p, 8);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 8);
  double v;
  std::memcpy(&v, b, 8);
  return v;
}

}  // namespace

std::string encode_checkpoint(const FieldConfig& c, const FieldParams& params) {
  FieldModel(c).check(params);
  const auto& m = c.manifold;
  std::ostringstream h;
  h << "FP01"
    << " dims=" << c.dims.id << ',' << c.dims.exp << ',' << c.dims.eps << " template=" << c.templ.pos_frequencies
    << ',' << c.templ.dir_frequencies << ',' << c.templ.hidden << ',' << c.templ.layers << ','
    << c.templ.color_hidden << " deform=" << c.deform.pos_frequencies << ',' << c.deform.hidden << ','
    << c.deform.layers << ',' << real(c.deform.max_deform)
    << " manifold=" << (m.mode == ManifoldMode::Learned ? "learned" : "analytic") << ',' << real(m.center.x) << ','
    << real(m.center.y) << ',' << real(m.center.z) << ',' << m.pos_frequencies << ',' << m.hidden << ',' << m.layers
    << " levels=" << join(m.levels) << " counts=" << params.template_params.size() << ','
    << params.deform_params.size() << ',' << params.manifold_params.size() << '\n';
  std::string out = h.str();
  for (double v : params.template_params) put_double(out, v);
  for (double v : params.deform_params) put_double(out, v);
  for (double v : params.manifold_params) put_double(out, v);
  return out;
}

void decode_checkpoint(const std::string& bytes, FieldConfig& config, FieldParams& params) {
  const std::size_t eol = bytes.find('\n');
  if (eol == std::string::npos || bytes.compare(0, 5, "FP01 ") != 0) {
    throw CheckpointError("checkpoint: missing FP01 header");
  }
  std::map<std::string, std::string> kv;
  for (const std::string& tok : split(bytes.substr(5, eol - 5), ' ')) {
    if (tok.empty()) continue;
    const std::size_t eq = tok.find('=');
    if (eq == std::string::npos) throw CheckpointError("checkpoint header: malformed token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  FieldConfig c;
  const auto dims = fields_of(kv, "dims", 3);
  c.dims = {parse_int(dims[0]), parse_int(dims[1]), parse_int(dims[2])};
  const auto t = fields_of(kv, "template", 5);
  c.templ = {parse_int(t[0]), parse_int(t[1]), parse_int(t[2]), parse_int(t[3]), parse_int(t[4])};
  const auto d = fields_of(kv, "deform", 4);
  c.deform = {parse_int(d[0]), parse_int(d[1]), parse_int(d[2]), parse_real(d[3])};
  const auto m = fields_of(kv, "manifold", 7);
  if (m[0] != "learned" && m[0] != "analytic") throw CheckpointError("checkpoint header: unknown manifold mode");
  c.manifold.mode = m[0] == "learned" ? ManifoldMode::Learned : ManifoldMode::AnalyticRadial;
  c.manifold.center = {parse_real(m[1]), parse_real(m[2]), parse_real(m[3])};
  c.manifold.pos_frequencies = parse_int(m[4]);
  c.manifold.hidden = parse_int(m[5]);
  c.manifold.layers = parse_int(m[6]);
  c.manifold.levels.clear();
  for (const auto& s : fields_of(kv, "levels", 0)) c.manifold.levels.push_back(parse_real(s));
  const auto counts = fields_of(kv, "counts", 3);

  std::unique_ptr<FieldModel> model;
  try {
    model = std::make_unique<FieldModel>(c);
  } catch (const InvalidArgument& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  const std::size_t nt = model->templ().param_count();
  const std::size_t nd = model->deform().param_count();
  const std::size_t nm = model->manifold().param_count();
  if (static_cast<std::size_t>(parse_int(counts[0])) != nt || static_cast<std::size_t>(parse_int(counts[1])) != nd ||
      static_cast<std::size_t>(parse_int(counts[2])) != nm) {
    throw CheckpointError("checkpoint header: parameter counts do not match the architecture");
  }
  const std::size_t payload = bytes.size() - eol - 1;
  if (payload != 8 * (nt + nd + nm)) {
    throw CheckpointError("checkpoint: payload has " + std::to_string(payload) + " bytes, expected " +
                          std::to_string(8 * (nt + nd + nm)));
  }
  const char* p = bytes.data() + eol + 1;
  FieldParams out;
  auto read = [&p](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (double& x : v) x = get_double(p), p += 8;
  };
  read(out.template_params, nt);
  read(out.deform_params, nd);
  read(out.manifold_params, nm);
  if (!all_finite(out.template_params) || !all_finite(out.deform_params) || !all_finite(out.manifold_params)) {
    throw CheckpointError("checkpoint: non-finite parameters");
  }
  config = std::move(c);
  params = std::move(out);
}

void save_checkpoint(const std::filesystem::path& path, const FieldConfig& config, const FieldParams& params) {
  const std::string bytes = encode_checkpoint(config, params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, FieldConfig& config, FieldParams& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  decode_checkpoint(ss.str(), config, params);
}

}  // namespace deforma
