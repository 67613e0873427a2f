#include "rsrep/simsiam.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "rsrep/errors.hpp"

namespace rsrep {

std::string to_string(BackboneKind kind) {
  return kind == BackboneKind::kReferenceResNet50 ? "reference-resnet50" : "toy-cnn";
}

BackboneKind backbone_kind_from_string(const std::string& s) {
  if (s == "reference-resnet50") return BackboneKind::kReferenceResNet50;
  if (s == "toy-cnn") return BackboneKind::kToyCnn;
  throw ConfigError("unknown backbone kind '" + s + "'");
}

// ---------------------------------------------------------------- specs

BackboneSpec BackboneSpec::resnet50(int input_size) {
  return BackboneSpec{BackboneKind::kReferenceResNet50, input_size, 2048, {}};
}

BackboneSpec BackboneSpec::toy(std::vector<int> channels, int input_size) {
  const int feature_dim = channels.empty() ? 0 : channels.back();
  return BackboneSpec{BackboneKind::kToyCnn, input_size, feature_dim, std::move(channels)};
}

void BackboneSpec::validate() const {
  if (feature_dim <= 0) throw ConfigError("backbone.feature_dim must be positive");
  if (kind == BackboneKind::kReferenceResNet50) {
    if (feature_dim != 2048) throw ConfigError("reference-resnet50 has feature_dim 2048");
    if (input_size < 32) throw ConfigError("reference-resnet50 needs input_size >= 32");
    return;
  }
  if (input_size < 16) throw ConfigError("toy-cnn needs input_size >= 16");
  if (toy_channels.empty()) throw ConfigError("toy-cnn needs at least one conv stage");
  for (int c : toy_channels)
    if (c <= 0) throw ConfigError("toy-cnn channel widths must be positive");
  if (toy_channels.back() != feature_dim) {
    throw ConfigError("toy-cnn feature_dim must equal the last stage width");
  }
}

void EncoderSpec::validate() const {
  backbone.validate();
  if (proj_hidden.size() != 2) {
    throw ConfigError("projection head has exactly 3 layers (2 hidden widths), got " +
                      std::to_string(proj_hidden.size()) + " hidden widths");
  }
  for (int w : proj_hidden)
    if (w <= 0) throw ConfigError("projection hidden widths must be positive");
  if (proj_out_dim <= 0) throw ConfigError("proj_out_dim must be positive");
}

void PredictorSpec::validate() const {
  if (in_dim <= 0 || hidden <= 0 || out_dim <= 0) {
    throw ConfigError("predictor widths must be positive");
  }
  if (in_dim != out_dim) {
    throw ConfigError("predictor out_dim (" + std::to_string(out_dim) + ") must equal in_dim (" +
                      std::to_string(in_dim) + ")");
  }
}

void to_json(nlohmann::json& j, const BackboneSpec& s) {
  j = {{"kind", to_string(s.kind)},
       {"input_size", s.input_size},
       {"feature_dim", s.feature_dim},
       {"toy_channels", s.toy_channels}};
}

void from_json(const nlohmann::json& j, BackboneSpec& s) {
  s.kind = backbone_kind_from_string(j.at("kind").get<std::string>());
  s.input_size = j.at("input_size").get<int>();
  s.feature_dim = j.at("feature_dim").get<int>();
  s.toy_channels = j.value("toy_channels", std::vector<int>{});
}

void to_json(nlohmann::json& j, const EncoderSpec& s) {
  j = {{"backbone", s.backbone},
       {"proj_hidden", s.proj_hidden},
       {"proj_out_dim", s.proj_out_dim},
       {"batchnorm_on_output", s.batchnorm_on_output}};
}

void from_json(const nlohmann::json& j, EncoderSpec& s) {
  s.backbone = j.at("backbone").get<BackboneSpec>();
  s.proj_hidden = j.at("proj_hidden").get<std::vector<int>>();
  s.proj_out_dim = j.at("proj_out_dim").get<int>();
  s.batchnorm_on_output = j.at("batchnorm_on_output").get<bool>();
}

void to_json(nlohmann::json& j, const PredictorSpec& s) {
  j = {{"in_dim", s.in_dim},
       {"hidden", s.hidden},
       {"out_dim", s.out_dim},
       {"batchnorm_on_hidden", s.batchnorm_on_hidden}};
}

void from_json(const nlohmann::json& j, PredictorSpec& s) {
  s.in_dim = j.at("in_dim").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.out_dim = j.at("out_dim").get<int>();
  s.batchnorm_on_hidden = j.at("batchnorm_on_hidden").get<bool>();
}

// ---------------------------------------------------------------- networks

std::unique_ptr<Sequential> build_backbone(const BackboneSpec& spec) {
  spec.validate();
  auto net = std::make_unique<Sequential>();
  if (spec.kind == BackboneKind::kToyCnn) {
    int in = 3;
    for (std::size_t i = 0; i < spec.toy_channels.size(); ++i) {
      const int out = spec.toy_channels[i];
      const std::string idx = std::to_string(i);
      net->add("conv" + idx, std::make_unique<Conv2d>(in, out, 3, i == 0 ? 1 : 2, 1));
      net->add("bn" + idx, std::make_unique<BatchNorm>(out));
      net->add("relu" + idx, std::make_unique<ReLU>());
      in = out;
    }
  } else {
    net->add("conv1", std::make_unique<Conv2d>(3, 64, 7, 2, 3));
    net->add("bn1", std::make_unique<BatchNorm>(64));
    net->add("relu", std::make_unique<ReLU>());
    net->add("maxpool", std::make_unique<MaxPool2d>(3, 2, 1));
    constexpr int kBlocks[4] = {3, 4, 6, 3};
    int in = 64;
    for (int stage = 0; stage < 4; ++stage) {
      const int mid = 64 << stage;
      const int out = mid * 4;
      auto layer = std::make_unique<Sequential>();
      for (int b = 0; b < kBlocks[stage]; ++b) {
        const int stride = (b == 0 && stage > 0) ? 2 : 1;
        layer->add(std::to_string(b), std::make_unique<Bottleneck>(in, mid, out, stride));
        in = out;
      }
      net->add("layer" + std::to_string(stage + 1), std::move(layer));
    }
  }
  net->add("avgpool", std::make_unique<GlobalAvgPool>());
  return net;
}

Encoder::Encoder(const EncoderSpec& spec) : spec_(spec) {
  spec_.validate();
  backbone_ = build_backbone(spec_.backbone);
  const int widths[4] = {spec_.backbone.feature_dim, spec_.proj_hidden[0], spec_.proj_hidden[1],
                         spec_.proj_out_dim};
  for (int layer = 0; layer < 3; ++layer) {
    const bool last = layer == 2;
    const bool bn = !last || spec_.batchnorm_on_output;
    const std::string idx = std::to_string(layer);
    // A bias directly before batch-norm is redundant.
    projection_.add("fc" + idx, std::make_unique<Linear>(widths[layer], widths[layer + 1], !bn));
    if (bn) projection_.add("bn" + idx, std::make_unique<BatchNorm>(widths[layer + 1]));
    if (!last) projection_.add("relu" + idx, std::make_unique<ReLU>());
  }
}

Tensor Encoder::forward(const Tensor& x, Mode mode, Cache& cache) {
  const int s = spec_.backbone.input_size;
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != s || x.dim(3) != s) {
    throw DimensionError("encoder expects [B, 3, " + std::to_string(s) + ", " + std::to_string(s) +
                         "] input, got " + shape_string(x.shape()));
  }
  cache.children.assign(2, Cache{});
  Tensor features = backbone_->forward(x, mode, cache.children[0]);
  return projection_.forward(features, mode, cache.children[1]);
}

Tensor Encoder::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor g = projection_.backward(grad_out, cache.children.at(1));
  return backbone_->backward(g, cache.children.at(0));
}

void Encoder::collect(const std::string& prefix, std::vector<NamedParameter>& params,
                      std::vector<NamedBuffer>& buffers) {
  backbone_->collect(prefix + "backbone.", params, buffers);
  projection_.collect(prefix + "projection.", params, buffers);
}

void Encoder::initialize(Rng& rng) {
  backbone_->initialize(rng);
  projection_.initialize(rng);
}

Predictor::Predictor(const PredictorSpec& spec) : spec_(spec) {
  spec_.validate();
  layers_.add("fc0", std::make_unique<Linear>(spec_.in_dim, spec_.hidden, !spec_.batchnorm_on_hidden));
  if (spec_.batchnorm_on_hidden) layers_.add("bn0", std::make_unique<BatchNorm>(spec_.hidden));
  layers_.add("relu0", std::make_unique<ReLU>());
  layers_.add("fc1", std::make_unique<Linear>(spec_.hidden, spec_.out_dim, true));
}

Tensor Predictor::forward(const Tensor& x, Mode mode, Cache& cache) {
  return layers_.forward(x, mode, cache);
}

Tensor Predictor::backward(const Tensor& grad_out, const Cache& cache) {
  return layers_.backward(grad_out, cache);
}

void Predictor::collect(const std::string& prefix, std::vector<NamedParameter>& params,
                        std::vector<NamedBuffer>& buffers) {
  layers_.collect(prefix, params, buffers);
}

void Predictor::initialize(Rng& rng) { layers_.initialize(rng); }

std::unique_ptr<Encoder> build_encoder(const EncoderSpec& spec) {
  return std::make_unique<Encoder>(spec);
}

std::unique_ptr<Predictor> build_predictor(const PredictorSpec& spec) {
  return std::make_unique<Predictor>(spec);
}

std::size_t parameter_count(Module& m) {
  std::size_t n = 0;
  for (const auto& p : parameters_of(m)) n += p.param->value.size();
  return n;
}

// ---------------------------------------------------------------- loss

double negative_cosine(std::span<const double> p, std::span<const double> z) {
  if (p.size() != z.size()) {
    throw DimensionError("negative_cosine: dimensions " + std::to_string(p.size()) + " and " +
                         std::to_string(z.size()) + " differ");
  }
  double dot = 0.0, pp = 0.0, zz = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    dot += p[i] * z[i];
    pp += p[i] * p[i];
    zz += z[i] * z[i];
  }
  if (pp == 0.0 || zz == 0.0) throw NumericalError("negative_cosine: zero-norm input");
  return -dot / (std::sqrt(pp) * std::sqrt(zz));
}

Tensor stop_gradient(const Tensor& z) { return z; }

namespace {

void check_forward(const SimSiamForward& fwd) {
  const Tensor& ref = fwd.z1;
  if (ref.rank() != 2) throw DimensionError("branch outputs must be [B, D]");
  for (const Tensor* t : {&fwd.z2, &fwd.p1, &fwd.p2})
    if (!t->same_shape(ref)) throw DimensionError("branch outputs disagree in shape");
  if (ref.dim(0) == 0) throw DimensionError("symmetric loss of an empty batch");
}

/// Guarded D(p_i, z_i) for row i, optionally with gradients scaled by `scale`.
double guarded_term(const Tensor& p, const Tensor& z, int row, double scale, Tensor* dp,
                    Tensor* dz) {
  const int d = p.dim(1);
  const double* pr = p.data() + static_cast<std::size_t>(row) * d;
  const double* zr = z.data() + static_cast<std::size_t>(row) * d;
  double dot = 0.0, pp = 0.0, zz = 0.0;
  for (int k = 0; k < d; ++k) {
    dot += pr[k] * zr[k];
    pp += pr[k] * pr[k];
    zz += zr[k] * zr[k];
  }
  const double pn = std::sqrt(pp), zn = std::sqrt(zz);
  const double a = pn + kNormEpsilon, b = zn + kNormEpsilon;
  const double value = -dot / (a * b);
  // dD/dp = -z/(ab) + dot/(a^2 b) * p/|p|, and symmetrically for z.
  if (dp) {
    double* g = dp->data() + static_cast<std::size_t>(row) * d;
    const double radial = pn > 0.0 ? dot / (a * a * b * pn) : 0.0;
    for (int k = 0; k < d; ++k) g[k] += scale * (-zr[k] / (a * b) + radial * pr[k]);
  }
  if (dz) {
    double* g = dz->data() + static_cast<std::size_t>(row) * d;
    const double radial = zn > 0.0 ? dot / (a * b * b * zn) : 0.0;
    for (int k = 0; k < d; ++k) g[k] += scale * (-pr[k] / (a * b) + radial * zr[k]);
  }
  return value;
}

}  // namespace

std::vector<double> per_sample_symmetric_loss(const SimSiamForward& fwd) {
  check_forward(fwd);
  const Tensor z1 = stop_gradient(fwd.z1);
  const Tensor z2 = stop_gradient(fwd.z2);
  std::vector<double> out(static_cast<std::size_t>(fwd.p1.dim(0)));
  for (int i = 0; i < fwd.p1.dim(0); ++i) {
    out[i] = 0.5 * guarded_term(fwd.p1, z2, i, 0.0, nullptr, nullptr) +
             0.5 * guarded_term(fwd.p2, z1, i, 0.0, nullptr, nullptr);
  }
  return out;
}

double symmetric_loss(const SimSiamForward& fwd) {
  const auto per_sample = per_sample_symmetric_loss(fwd);
  double sum = 0.0;
  for (double v : per_sample) sum += v;
  return sum / static_cast<double>(per_sample.size());
}

LossGradients symmetric_loss_gradients(const SimSiamForward& fwd, bool stop_grad) {
  check_forward(fwd);
  const int batch = fwd.p1.dim(0);
  LossGradients g{0.0, Tensor(fwd.p1.shape()), Tensor(fwd.p2.shape()), Tensor(fwd.z1.shape()),
                  Tensor(fwd.z2.shape())};
  const double scale = 0.5 / batch;
  Tensor* dz1 = stop_grad ? nullptr : &g.dz1;
  Tensor* dz2 = stop_grad ? nullptr : &g.dz2;
  double sum = 0.0;
  for (int i = 0; i < batch; ++i) {
    sum += 0.5 * guarded_term(fwd.p1, fwd.z2, i, scale, &g.dp1, dz2);
    sum += 0.5 * guarded_term(fwd.p2, fwd.z1, i, scale, &g.dp2, dz1);
  }
  g.loss = sum / batch;
  return g;
}

double collapse_statistic(const Tensor& z) {
  if (z.rank() != 2) throw DimensionError("collapse_statistic expects [B, D]");
  const int n = z.dim(0), d = z.dim(1);
  if (n < 2) throw DimensionError("collapse_statistic needs a batch of at least 2");
  Tensor unit = z;
  for (int i = 0; i < n; ++i) {
    double sq = 0.0;
    for (int k = 0; k < d; ++k) sq += unit.at(i, k) * unit.at(i, k);
    const double norm = std::max(std::sqrt(sq), kNormEpsilon);
    for (int k = 0; k < d; ++k) unit.at(i, k) /= norm;
  }
  double total = 0.0;
  for (int k = 0; k < d; ++k) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += unit.at(i, k);
    mean /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (unit.at(i, k) - mean) * (unit.at(i, k) - mean);
    total += std::sqrt(var / n);
  }
  return total / d;
}

// ---------------------------------------------------------------- model

SimSiamModel::SimSiamModel(const EncoderSpec& encoder, const PredictorSpec& predictor) {
  encoder.validate();
  predictor.validate();
  if (predictor.in_dim != encoder.proj_out_dim) {
    throw ConfigError("predictor in_dim (" + std::to_string(predictor.in_dim) +
                      ") must equal proj_out_dim (" + std::to_string(encoder.proj_out_dim) + ")");
  }
  encoder_ = build_encoder(encoder);
  predictor_ = build_predictor(predictor);
}

void SimSiamModel::initialize(std::uint64_t seed) {
  Rng rng(seed);
  encoder_->initialize(rng);
  predictor_->initialize(rng);
}

std::vector<NamedParameter> SimSiamModel::parameters() {
  auto params = parameters_of(*encoder_, "encoder.");
  auto pred = parameters_of(*predictor_, "predictor.");
  params.insert(params.end(), pred.begin(), pred.end());
  return params;
}

std::vector<NamedBuffer> SimSiamModel::buffers() {
  auto bufs = buffers_of(*encoder_, "encoder.");
  auto pred = buffers_of(*predictor_, "predictor.");
  bufs.insert(bufs.end(), pred.begin(), pred.end());
  return bufs;
}

void SimSiamModel::check_views(const ViewPair& views) const {
  if (!views.view1.same_shape(views.view2)) {
    throw DimensionError("views differ in shape: " + shape_string(views.view1.shape()) + " vs " +
                         shape_string(views.view2.shape()));
  }
}

Tensor SimSiamModel::predict(const Tensor& z, Mode mode, Cache& cache) {
  return identity_predictor_ ? z : predictor_->forward(z, mode, cache);
}

Tensor SimSiamModel::predict_backward(const Tensor& grad, const Cache& cache) {
  return identity_predictor_ ? grad : predictor_->backward(grad, cache);
}

SimSiamForward SimSiamModel::forward(const ViewPair& views, Mode mode) {
  check_views(views);
  SimSiamForward out;
  Cache c;
  out.z1 = encoder_->forward(views.view1, mode, c);
  out.z2 = encoder_->forward(views.view2, mode, c);
  out.p1 = predict(out.z1, mode, c);
  out.p2 = predict(out.z2, mode, c);
  return out;
}

SimSiamModel::Step SimSiamModel::forward_backward(const ViewPair& views, const LossOptions& options) {
  check_views(views);
  zero_grads(*encoder_);
  zero_grads(*predictor_);

  Cache enc1, enc2, pred1, pred2;
  Step step;
  step.outputs.z1 = encoder_->forward(views.view1, Mode::kTrain, enc1);
  step.outputs.z2 = encoder_->forward(views.view2, Mode::kTrain, enc2);
  step.outputs.p1 = predict(step.outputs.z1, Mode::kTrain, pred1);
  step.outputs.p2 = predict(step.outputs.z2, Mode::kTrain, pred2);

  LossGradients g = symmetric_loss_gradients(step.outputs, options.stop_gradient);
  step.loss = g.loss;

  // Gradient reaches z_i only through p_i = h(z_i) unless the stop-gradient is off.
  Tensor grad_z1 = predict_backward(g.dp1, pred1);
  Tensor grad_z2 = predict_backward(g.dp2, pred2);
  if (!options.stop_gradient) {
    grad_z1 += g.dz1;
    grad_z2 += g.dz2;
  }
  encoder_->backward(grad_z1, enc1);
  encoder_->backward(grad_z2, enc2);
  return step;
}

}  // namespace rsrep
