#include "plvo/encoder.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "plvo/codec.hpp"
#include "plvo/tensor_eigen.hpp"

namespace plvo {

using nlohmann::json;

EncoderWeights EncoderWeights::init(int dim, int n_layers,
                                    std::span<const int> hidden, Rng& rng) {
  EncoderWeights w;
  w.dim = dim;
  std::vector<int> sizes{3};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(dim);
  for (size_t k = 0; k + 1 < sizes.size(); ++k) {
    // The last layer starts small so the position term grows from near
    // zero instead of drowning the visual descriptors.
    const double gain = (k + 2 == sizes.size()) ? 0.1 : 1.0;
    w.pos_mlp.emplace_back(
        ad::Tensor::xavier(sizes[k], sizes[k + 1], rng, gain),
        ad::Tensor::zeros(1, sizes[k + 1]));
  }
  for (int l = 0; l < n_layers; ++l) {
    AttentionLayerWeights layer;
    layer.w_query = ad::Tensor::xavier(dim, dim, rng);
    layer.b_query = ad::Tensor::zeros(1, dim);
    layer.w_key = ad::Tensor::xavier(dim, dim, rng);
    layer.b_key = ad::Tensor::zeros(1, dim);
    layer.w_value = ad::Tensor::xavier(dim, dim, rng);
    layer.b_value = ad::Tensor::zeros(1, dim);
    layer.w_msg1 = ad::Tensor::xavier(2 * dim, 2 * dim, rng);
    layer.b_msg1 = ad::Tensor::zeros(1, 2 * dim);
    layer.w_msg2 = ad::Tensor::xavier(2 * dim, dim, rng, 0.1);
    layer.b_msg2 = ad::Tensor::zeros(1, dim);
    w.layers.push_back(std::move(layer));
  }
  w.proj_w = ad::Tensor::identity(dim);
  for (double& x : w.proj_w.v) x += 0.01 * rng.normal();
  w.proj_b = ad::Tensor::zeros(1, dim);
  w.metric = ad::Tensor::identity(dim);
  for (double& x : w.metric.v) x += 0.01 * rng.normal();
  w.dustbin = ad::Tensor::scalar(1.0);
  w.temperature = 0.1;
  return w;
}

EncoderWeights EncoderWeights::descriptor_only(int dim, double temperature) {
  EncoderWeights w;
  w.dim = dim;
  w.proj_w = ad::Tensor::identity(dim);
  w.proj_b = ad::Tensor::zeros(1, dim);
  w.metric = ad::Tensor::identity(dim);
  // Dustbin sits between the cosine of a true pair (1.0) and the cosine of
  // typical distractors, in logit units.
  w.dustbin = ad::Tensor::scalar(0.7 / temperature);
  w.temperature = temperature;
  return w;
}

std::vector<int> EncoderWeights::hidden_sizes() const {
  std::vector<int> hidden;
  for (size_t k = 0; k + 1 < pos_mlp.size(); ++k)
    hidden.push_back(pos_mlp[k].first.cols);
  return hidden;
}

template <typename Self, typename Ptr>
static std::vector<Ptr> collect_params(Self& w) {
  std::vector<Ptr> out;
  for (auto& [mat, bias] : w.pos_mlp) {
    out.push_back(&mat);
    out.push_back(&bias);
  }
  for (auto& layer : w.layers) {
    out.push_back(&layer.w_query);
    out.push_back(&layer.b_query);
    out.push_back(&layer.w_key);
    out.push_back(&layer.b_key);
    out.push_back(&layer.w_value);
    out.push_back(&layer.b_value);
    out.push_back(&layer.w_msg1);
    out.push_back(&layer.b_msg1);
    out.push_back(&layer.w_msg2);
    out.push_back(&layer.b_msg2);
  }
  out.push_back(&w.proj_w);
  out.push_back(&w.proj_b);
  out.push_back(&w.metric);
  out.push_back(&w.dustbin);
  return out;
}

std::vector<ad::Tensor*> EncoderWeights::parameters() {
  return collect_params<EncoderWeights, ad::Tensor*>(*this);
}

std::vector<const ad::Tensor*> EncoderWeights::parameters() const {
  return collect_params<const EncoderWeights, const ad::Tensor*>(*this);
}

std::vector<std::string> EncoderWeights::parameter_names() const {
  std::vector<std::string> names;
  for (size_t k = 0; k < pos_mlp.size(); ++k) {
    names.push_back("pos_mlp." + std::to_string(k) + ".w");
    names.push_back("pos_mlp." + std::to_string(k) + ".b");
  }
  static const char* kLayerParts[] = {"wq", "bq", "wk", "bk", "wv",
                                      "bv", "wm1", "bm1", "wm2", "bm2"};
  for (size_t l = 0; l < layers.size(); ++l)
    for (const char* part : kLayerParts)
      names.push_back("layer." + std::to_string(l) + "." + part);
  names.push_back("proj.w");
  names.push_back("proj.b");
  names.push_back("metric");
  names.push_back("dustbin");
  return names;
}

namespace {

void append_network(std::string& out, const std::string& prefix,
                    const EncoderWeights& w) {
  const auto params = w.parameters();
  const auto names = w.parameter_names();
  for (size_t k = 0; k < params.size(); ++k) {
    out += prefix + '.' + names[k] + ' ' + std::to_string(params[k]->rows) +
           ' ' + std::to_string(params[k]->cols);
    for (double x : params[k]->v) {
      out += ' ';
      out += detail::format_double(x);
    }
    out += '\n';
  }
}

json network_header(const EncoderWeights& w) {
  json j;
  j["layers"] = w.layers.size();
  j["hidden"] = w.hidden_sizes();
  j["has_pos_mlp"] = !w.pos_mlp.empty();
  j["temperature"] = w.temperature;
  return j;
}

EncoderWeights network_skeleton(int dim, const json& j) {
  EncoderWeights w;
  w.dim = dim;
  w.temperature = j.at("temperature").get<double>();
  if (j.value("has_pos_mlp", true)) {
    std::vector<int> sizes{3};
    for (int h : j.at("hidden")) sizes.push_back(h);
    sizes.push_back(dim);
    for (size_t k = 0; k + 1 < sizes.size(); ++k)
      w.pos_mlp.emplace_back(ad::Tensor::zeros(sizes[k], sizes[k + 1]),
                             ad::Tensor::zeros(1, sizes[k + 1]));
  }
  const int n_layers = j.at("layers").get<int>();
  for (int l = 0; l < n_layers; ++l) {
    AttentionLayerWeights layer;
    layer.w_query = ad::Tensor::zeros(dim, dim);
    layer.b_query = ad::Tensor::zeros(1, dim);
    layer.w_key = ad::Tensor::zeros(dim, dim);
    layer.b_key = ad::Tensor::zeros(1, dim);
    layer.w_value = ad::Tensor::zeros(dim, dim);
    layer.b_value = ad::Tensor::zeros(1, dim);
    layer.w_msg1 = ad::Tensor::zeros(2 * dim, 2 * dim);
    layer.b_msg1 = ad::Tensor::zeros(1, 2 * dim);
    layer.w_msg2 = ad::Tensor::zeros(2 * dim, dim);
    layer.b_msg2 = ad::Tensor::zeros(1, dim);
    w.layers.push_back(std::move(layer));
  }
  w.proj_w = ad::Tensor::zeros(dim, dim);
  w.proj_b = ad::Tensor::zeros(1, dim);
  w.metric = ad::Tensor::zeros(dim, dim);
  w.dustbin = ad::Tensor::zeros(1, 1);
  return w;
}

}  // namespace

void save_weights(const MatcherWeights& weights,
                  const std::filesystem::path& path) {
  json header;
  header["format"] = kWeightsFormatVersion;
  header["dim"] = weights.point.dim;
  header["point"] = network_header(weights.point);
  header["line"] = network_header(weights.line);
  std::string out = header.dump();
  out += '\n';
  append_network(out, "point", weights.point);
  append_network(out, "line", weights.line);
  detail::write_file_atomic(path, out);
}

MatcherWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw FormatError(path.string() + ": missing header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad header: " + e.what());
  }
  const std::string format = header.value("format", "");
  if (format != kWeightsFormatVersion)
    throw VersionMismatch(path.string() + ": format '" + format +
                          "', expected '" + kWeightsFormatVersion + "'");
  const int dim = header.at("dim").get<int>();
  MatcherWeights weights;
  weights.point = network_skeleton(dim, header.at("point"));
  weights.line = network_skeleton(dim, header.at("line"));

  auto index = [](EncoderWeights& w, const std::string& prefix) {
    std::map<std::string, ad::Tensor*> m;
    auto params = w.parameters();
    auto names = w.parameter_names();
    for (size_t k = 0; k < params.size(); ++k)
      m[prefix + '.' + names[k]] = params[k];
    return m;
  };
  std::map<std::string, ad::Tensor*> by_name = index(weights.point, "point");
  by_name.merge(index(weights.line, "line"));

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string name;
    int rows, cols;
    if (!(ss >> name >> rows >> cols))
      throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                        ": bad tensor record");
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw FormatError(path.string() + ": unknown tensor '" + name + "'");
    ad::Tensor& t = *it->second;
    if (t.rows != rows || t.cols != cols)
      throw FormatError(path.string() + ": tensor '" + name + "' is " +
                        std::to_string(rows) + "x" + std::to_string(cols) +
                        ", expected " + t.shape_str());
    for (double& x : t.v)
      if (!(ss >> x))
        throw FormatError(path.string() + ": tensor '" + name +
                          "' truncated");
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw FormatError(path.string() + ": missing tensor '" +
                      by_name.begin()->first + "'");
  return weights;
}

FeatureArrays make_feature_arrays(std::span<const Keypoint> keypoints,
                                  int width, int height) {
  FeatureArrays arrays;
  arrays.count = static_cast<int>(keypoints.size());
  const int dim = keypoints.empty() ? 0 : keypoints.front().dim();
  arrays.positions = ad::Tensor(arrays.count, 3);
  arrays.descriptors = ad::Tensor(arrays.count, dim);
  for (int i = 0; i < arrays.count; ++i) {
    const Keypoint& kp = keypoints[i];
    if (kp.dim() != dim)
      throw DimensionMismatch("make_feature_arrays: mixed descriptor dims");
    arrays.positions.at(i, 0) = 2.0 * kp.u() / width - 1.0;
    arrays.positions.at(i, 1) = 2.0 * kp.v() / height - 1.0;
    arrays.positions.at(i, 2) = kp.confidence();
    for (int j = 0; j < dim; ++j)
      arrays.descriptors.at(i, j) = kp.descriptor()[j];
  }
  return arrays;
}

EncoderLeaves weights_on_tape(ad::Tape& tape, const EncoderWeights& weights,
                              bool requires_grad) {
  EncoderLeaves leaves;
  leaves.dim = weights.dim;
  leaves.temperature = weights.temperature;
  for (const auto& [mat, bias] : weights.pos_mlp)
    leaves.pos_mlp.emplace_back(tape.input(mat, requires_grad),
                                tape.input(bias, requires_grad));
  for (const AttentionLayerWeights& layer : weights.layers) {
    EncoderLeaves::Layer l;
    l.wq = tape.input(layer.w_query, requires_grad);
    l.bq = tape.input(layer.b_query, requires_grad);
    l.wk = tape.input(layer.w_key, requires_grad);
    l.bk = tape.input(layer.b_key, requires_grad);
    l.wv = tape.input(layer.w_value, requires_grad);
    l.bv = tape.input(layer.b_value, requires_grad);
    l.wm1 = tape.input(layer.w_msg1, requires_grad);
    l.bm1 = tape.input(layer.b_msg1, requires_grad);
    l.wm2 = tape.input(layer.w_msg2, requires_grad);
    l.bm2 = tape.input(layer.b_msg2, requires_grad);
    leaves.layers.push_back(l);
  }
  leaves.proj_w = tape.input(weights.proj_w, requires_grad);
  leaves.proj_b = tape.input(weights.proj_b, requires_grad);
  leaves.metric = tape.input(weights.metric, requires_grad);
  leaves.dustbin = tape.input(weights.dustbin, requires_grad);
  return leaves;
}

std::vector<ad::NodeId> leaf_ids(const EncoderLeaves& leaves) {
  std::vector<ad::NodeId> ids;
  for (const auto& [w, b] : leaves.pos_mlp) {
    ids.push_back(w);
    ids.push_back(b);
  }
  for (const EncoderLeaves::Layer& l : leaves.layers)
    for (ad::NodeId id : {l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wm1, l.bm1,
                          l.wm2, l.bm2})
      ids.push_back(id);
  ids.push_back(leaves.proj_w);
  ids.push_back(leaves.proj_b);
  ids.push_back(leaves.metric);
  ids.push_back(leaves.dustbin);
  return ids;
}

ad::NodeId encode_on_tape(ad::Tape& tape, const EncoderLeaves& w,
                          const FeatureArrays& features,
                          bool ablate_positions) {
  const ad::NodeId desc = tape.constant(features.descriptors);
  if (ablate_positions || w.pos_mlp.empty()) return desc;
  ad::NodeId h = tape.constant(features.positions);
  for (size_t k = 0; k < w.pos_mlp.size(); ++k) {
    h = tape.add_rowwise(tape.matmul(h, w.pos_mlp[k].first),
                         w.pos_mlp[k].second);
    if (k + 1 < w.pos_mlp.size()) h = tape.relu(h);
  }
  return tape.add(desc, h);
}

namespace {

/// One attention read: queries from `dst`, keys/values from `src`,
/// residual message MLP on [dst || aggregated].
ad::NodeId attention_update(ad::Tape& tape, const EncoderLeaves::Layer& l,
                            ad::NodeId dst, ad::NodeId src, int dim) {
  const ad::NodeId q = tape.add_rowwise(tape.matmul(dst, l.wq), l.bq);
  const ad::NodeId k = tape.add_rowwise(tape.matmul(src, l.wk), l.bk);
  const ad::NodeId v = tape.add_rowwise(tape.matmul(src, l.wv), l.bv);
  const ad::NodeId scores =
      tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(dim));
  const ad::NodeId prob = tape.softmax_rows(scores);
  // Aggregation reduces over the (permutable) key axis.
  const ad::NodeId message = tape.matmul_keysum(prob, v);
  const ad::NodeId cat = tape.concat_cols(dst, message);
  const ad::NodeId m1 =
      tape.relu(tape.add_rowwise(tape.matmul(cat, l.wm1), l.bm1));
  const ad::NodeId m2 = tape.add_rowwise(tape.matmul(m1, l.wm2), l.bm2);
  return tape.add(dst, m2);
}

}  // namespace

std::pair<ad::NodeId, ad::NodeId> attend_on_tape(ad::Tape& tape,
                                                 const EncoderLeaves& w,
                                                 ad::NodeId ya, ad::NodeId yb) {
  ad::NodeId xa = ya;
  ad::NodeId xb = yb;
  for (size_t l = 0; l < w.layers.size(); ++l) {
    const bool self = (l % 2 == 0);
    const EncoderLeaves::Layer& layer = w.layers[l];
    const ad::NodeId src_a = self ? xa : xb;
    const ad::NodeId src_b = self ? xb : xa;
    const ad::NodeId next_a =
        attention_update(tape, layer, xa, src_a, w.dim);
    const ad::NodeId next_b =
        attention_update(tape, layer, xb, src_b, w.dim);
    xa = next_a;
    xb = next_b;
  }
  return {xa, xb};
}

ad::NodeId matching_descriptors_on_tape(ad::Tape& tape,
                                        const EncoderLeaves& w, ad::NodeId x) {
  return tape.add_rowwise(tape.matmul(x, w.proj_w), w.proj_b);
}

ad::NodeId affinity_logits_on_tape(ad::Tape& tape, const EncoderLeaves& w,
                                   ad::NodeId ha, ad::NodeId hb) {
  if (!(w.temperature > 0.0))
    throw NonPositiveTemperature("affinity_logits: temperature " +
                                 std::to_string(w.temperature));
  return tape.scale(
      tape.matmul(tape.matmul(ha, w.metric), tape.transpose(hb)),
      1.0 / w.temperature);
}

ad::NodeId augment_dustbin_on_tape(ad::Tape& tape, const EncoderLeaves& w,
                                   ad::NodeId logits) {
  const ad::Tensor& s = tape.value(logits);
  const int m = s.rows, n = s.cols;
  const ad::NodeId right =
      tape.matmul(tape.constant(ad::Tensor::full(m, 1, 1.0)), w.dustbin);
  const ad::NodeId top = tape.concat_cols(logits, right);
  const ad::NodeId bottom =
      tape.matmul(tape.matmul(tape.constant(ad::Tensor::full(1, 1, 1.0)),
                              w.dustbin),
                  tape.constant(ad::Tensor::full(1, n + 1, 1.0)));
  return tape.concat_rows(top, bottom);
}

MatX encode(std::span<const Keypoint> keypoints, int width, int height,
            const EncoderWeights& w, bool ablate_positions) {
  for (const Keypoint& kp : keypoints)
    if (kp.dim() != w.dim)
      throw DimensionMismatch("encode: descriptor dim " +
                              std::to_string(kp.dim()) + " vs network dim " +
                              std::to_string(w.dim));
  ad::Tape tape;
  const EncoderLeaves leaves = weights_on_tape(tape, w, false);
  const FeatureArrays arrays = make_feature_arrays(keypoints, width, height);
  return to_matrix(
      tape.value(encode_on_tape(tape, leaves, arrays, ablate_positions)));
}

std::pair<MatX, MatX> attend(const MatX& ya, const MatX& yb,
                             const EncoderWeights& w) {
  if (ya.cols() != w.dim || yb.cols() != w.dim)
    throw DimensionMismatch("attend: inputs must have dim " +
                            std::to_string(w.dim));
  ad::Tape tape;
  const EncoderLeaves leaves = weights_on_tape(tape, w, false);
  const auto [xa, xb] = attend_on_tape(tape, leaves,
                                       tape.constant(to_tensor(ya)),
                                       tape.constant(to_tensor(yb)));
  return {to_matrix(tape.value(xa)), to_matrix(tape.value(xb))};
}

MatX matching_descriptors(const MatX& x, const EncoderWeights& w) {
  if (x.cols() != w.dim)
    throw DimensionMismatch("matching_descriptors: input dim " +
                            std::to_string(x.cols()));
  ad::Tape tape;
  const EncoderLeaves leaves = weights_on_tape(tape, w, false);
  return to_matrix(tape.value(
      matching_descriptors_on_tape(tape, leaves, tape.constant(to_tensor(x)))));
}

}  // namespace plvo
