#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rsrep/layers.hpp"

namespace rsrep {

enum class BackboneKind { kReferenceResNet50, kToyCnn };

std::string to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& s);

struct BackboneSpec {
  BackboneKind kind = BackboneKind::kReferenceResNet50;
  /// Square input extent in pixels (H = W); channels are always 3.
  int input_size = 224;
  /// Width of the globally pooled feature vector.
  int feature_dim = 2048;
  /// Toy CNN only: output channels of each 3x3 conv stage. The first stage
  /// keeps resolution, later stages halve it.
  std::vector<int> toy_channels;

  void validate() const;
  bool operator==(const BackboneSpec&) const = default;

  static BackboneSpec resnet50(int input_size = 224);
  static BackboneSpec toy(std::vector<int> channels, int input_size = 16);
};

struct EncoderSpec {
  BackboneSpec backbone;
  std::vector<int> proj_hidden{1024, 512};
  int proj_out_dim = 2048;
  bool batchnorm_on_output = true;

  void validate() const;
  bool operator==(const EncoderSpec&) const = default;
};

struct PredictorSpec {
  int in_dim = 2048;
  int hidden = 256;
  int out_dim = 2048;
  bool batchnorm_on_hidden = true;

  void validate() const;
  bool operator==(const PredictorSpec&) const = default;
};

void to_json(nlohmann::json& j, const BackboneSpec& s);
void from_json(const nlohmann::json& j, BackboneSpec& s);
void to_json(nlohmann::json& j, const EncoderSpec& s);
void from_json(const nlohmann::json& j, EncoderSpec& s);
void to_json(nlohmann::json& j, const PredictorSpec& s);
void from_json(const nlohmann::json& j, PredictorSpec& s);

/// Builds the convolutional trunk ending in global average pooling:
/// [N, 3, H, W] -> [N, feature_dim].
std::unique_ptr<Sequential> build_backbone(const BackboneSpec& spec);

/// f: backbone followed by the 3-layer projection MLP.
class Encoder : public Module {
 public:
  using Module::forward;
  explicit Encoder(const EncoderSpec& spec);

  Tensor forward(const Tensor& x, Mode mode, Cache& cache) override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect(const std::string& prefix, std::vector<NamedParameter>& params,
               std::vector<NamedBuffer>& buffers) override;
  void initialize(Rng& rng) override;

  const EncoderSpec& spec() const { return spec_; }
  Sequential& backbone() { return *backbone_; }
  Sequential& projection() { return projection_; }

 private:
  EncoderSpec spec_;
  std::unique_ptr<Sequential> backbone_;
  Sequential projection_;
};

/// h: 2-layer MLP bottleneck, D -> hidden -> D.
class Predictor : public Module {
 public:
  using Module::forward;
  explicit Predictor(const PredictorSpec& spec);

  Tensor forward(const Tensor& x, Mode mode, Cache& cache) override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect(const std::string& prefix, std::vector<NamedParameter>& params,
               std::vector<NamedBuffer>& buffers) override;
  void initialize(Rng& rng) override;

  const PredictorSpec& spec() const { return spec_; }
  Sequential& layers() { return layers_; }

 private:
  PredictorSpec spec_;
  Sequential layers_;
};

std::unique_ptr<Encoder> build_encoder(const EncoderSpec& spec);
std::unique_ptr<Predictor> build_predictor(const PredictorSpec& spec);

std::size_t parameter_count(Module& m);

/// Two augmented views of the same source images; row i of both batches
/// comes from source image i. Shape [B, 3, H, W].
struct ViewPair {
  Tensor view1;
  Tensor view2;
};

struct SimSiamForward {
  Tensor z1;
  Tensor z2;
  Tensor p1;
  Tensor p2;
};

/// Norm guard used inside the training loss.
inline constexpr double kNormEpsilon = 1e-12;

/// D(p, z) = -(p . z) / (|p| |z|). Throws NumericalError on a zero-norm input.
double negative_cosine(std::span<const double> p, std::span<const double> z);

/// Value passthrough. Everything downstream of the returned tensor is
/// treated as constant: the loss gradient routines never route gradient
/// into it.
Tensor stop_gradient(const Tensor& z);

/// Per-sample L_i = 1/2 D(p1_i, z2_i) + 1/2 D(p2_i, z1_i) with the epsilon guard.
std::vector<double> per_sample_symmetric_loss(const SimSiamForward& fwd);

/// Batch mean of per_sample_symmetric_loss. Throws on an empty batch.
double symmetric_loss(const SimSiamForward& fwd);

/// Gradients of the symmetric loss w.r.t. the four branch outputs. With the
/// stop-gradient in place dz1 and dz2 are identically zero.
struct LossGradients {
  double loss = 0.0;
  Tensor dp1;
  Tensor dp2;
  Tensor dz1;
  Tensor dz2;
};
LossGradients symmetric_loss_gradients(const SimSiamForward& fwd, bool stop_gradient = true);

/// Mean over dimensions of the per-dimension standard deviation of the
/// L2-normalized rows of z. About 1/sqrt(d) for well-spread embeddings and 0
/// for collapsed ones. Requires at least two rows.
double collapse_statistic(const Tensor& z);

struct LossOptions {
  bool stop_gradient = true;
};

/// The siamese network: one encoder and one predictor shared by both branches.
class SimSiamModel {
 public:
  SimSiamModel(const EncoderSpec& encoder, const PredictorSpec& predictor);

  /// Fan-in scaled uniform initialization of every layer from `seed`.
  void initialize(std::uint64_t seed);

  SimSiamForward forward(const ViewPair& views, Mode mode);

  /// Zeroes gradients, runs both branches in training mode, and
  /// backpropagates the symmetric loss into every parameter gradient.
  struct Step {
    double loss = 0.0;
    SimSiamForward outputs;
  };
  Step forward_backward(const ViewPair& views, const LossOptions& options = {});

  Encoder& encoder() { return *encoder_; }
  Predictor& predictor() { return *predictor_; }

  std::vector<NamedParameter> parameters();
  std::vector<NamedBuffer> buffers();

  /// Test hook: replaces h with the identity map.
  void set_identity_predictor(bool on) { identity_predictor_ = on; }

 private:
  Tensor predict(const Tensor& z, Mode mode, Cache& cache);
  Tensor predict_backward(const Tensor& grad, const Cache& cache);
  void check_views(const ViewPair& views) const;

  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<Predictor> predictor_;
  bool identity_predictor_ = false;
};

}  // namespace rsrep
