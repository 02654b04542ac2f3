#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plvo/autodiff.hpp"
#include "plvo/types.hpp"

namespace plvo {

/// Weights of one attention layer. All matrices right-multiply row-vector
/// features: q = x W + b.
struct AttentionLayerWeights {
  ad::Tensor w_query, b_query;  // D x D, 1 x D
  ad::Tensor w_key, b_key;
  ad::Tensor w_value, b_value;
  ad::Tensor w_msg1, b_msg1;  // 2D x 2D, 1 x 2D
  ad::Tensor w_msg2, b_msg2;  // 2D x D, 1 x D
};

/// All learnable state of one matching network (the P-point and L-point
/// networks are two independent instances).
struct EncoderWeights {
  int dim = 32;
  /// Position MLP (w, b) pairs, 3 -> hidden... -> dim, ReLU between layers.
  std::vector<std::pair<ad::Tensor, ad::Tensor>> pos_mlp;
  /// Alternating attention layers; even index = self, odd index = cross.
  std::vector<AttentionLayerWeights> layers;
  ad::Tensor proj_w, proj_b;  // final projection, D x D and 1 x D
  ad::Tensor metric;          // bilinear affinity metric, D x D
  ad::Tensor dustbin;         // 1 x 1 learnable dustbin score
  double temperature = 0.1;   // affinity temperature (not learned)

  /// Random initialization near descriptor-cosine matching.
  static EncoderWeights init(int dim, int n_layers,
                             std::span<const int> hidden, Rng& rng);
  /// Pure descriptor matcher: no position MLP, no attention layers,
  /// identity projection and metric. Deterministic.
  static EncoderWeights descriptor_only(int dim, double temperature = 0.05);

  std::vector<int> hidden_sizes() const;
  /// Stable training/checkpoint order.
  std::vector<ad::Tensor*> parameters();
  std::vector<const ad::Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

/// P-point and L-point networks plus shared metadata, as checkpointed.
struct MatcherWeights {
  EncoderWeights point;
  EncoderWeights line;
};

void save_weights(const MatcherWeights& weights,
                  const std::filesystem::path& path);
MatcherWeights load_weights(const std::filesystem::path& path);

/// Per-image input arrays for the matcher forward pass.
struct FeatureArrays {
  ad::Tensor positions;    // n x 3: (u, v normalized to [-1,1], confidence)
  ad::Tensor descriptors;  // n x D
  int count = 0;
};

FeatureArrays make_feature_arrays(std::span<const Keypoint> keypoints,
                                  int width, int height);

/// Tape-side mirror of EncoderWeights; leaves registered in parameter order.
struct EncoderLeaves {
  std::vector<std::pair<ad::NodeId, ad::NodeId>> pos_mlp;
  struct Layer {
    ad::NodeId wq, bq, wk, bk, wv, bv, wm1, bm1, wm2, bm2;
  };
  std::vector<Layer> layers;
  ad::NodeId proj_w = -1, proj_b = -1, metric = -1, dustbin = -1;
  int dim = 0;
  double temperature = 0.1;
};

EncoderLeaves weights_on_tape(ad::Tape& tape, const EncoderWeights& weights,
                              bool requires_grad);

/// Leaf node ids in EncoderWeights::parameters() order.
std::vector<ad::NodeId> leaf_ids(const EncoderLeaves& leaves);

/// y_i = d_i + MLP(p_i); with ablate_positions the MLP term is dropped.
ad::NodeId encode_on_tape(ad::Tape& tape, const EncoderLeaves& w,
                          const FeatureArrays& features,
                          bool ablate_positions = false);

/// L alternating self/cross attention layers with residual message MLPs.
std::pair<ad::NodeId, ad::NodeId> attend_on_tape(ad::Tape& tape,
                                                 const EncoderLeaves& w,
                                                 ad::NodeId ya, ad::NodeId yb);

/// h_i = x_i W + b.
ad::NodeId matching_descriptors_on_tape(ad::Tape& tape,
                                        const EncoderLeaves& w, ad::NodeId x);

/// (H_A E H_B^T) / temperature, the log of Eq.-3 affinities.
ad::NodeId affinity_logits_on_tape(ad::Tape& tape, const EncoderLeaves& w,
                                   ad::NodeId ha, ad::NodeId hb);

/// Appends the dustbin row and column (all filled with the learnable z).
ad::NodeId augment_dustbin_on_tape(ad::Tape& tape, const EncoderLeaves& w,
                                   ad::NodeId logits);

// Plain-matrix convenience wrappers (forward only, via a scratch tape).
MatX encode(std::span<const Keypoint> keypoints, int width, int height,
            const EncoderWeights& w, bool ablate_positions = false);
std::pair<MatX, MatX> attend(const MatX& ya, const MatX& yb,
                             const EncoderWeights& w);
MatX matching_descriptors(const MatX& x, const EncoderWeights& w);

}  // namespace plvo
