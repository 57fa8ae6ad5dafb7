#pragma once

#include <memory>

#include "gadet/nn.hpp"

namespace gadet::nn {

// Inception-v3 backbone with the standard filter banks, batch-normalized
// convolutions and a global-average-pooled single-logit head. Over 21 million
// trainable weights at any input size.
namespace inception {

namespace detail {

// conv + batchnorm + relu, the basic unit everywhere in this architecture
inline void conv_bn(Sequential& seq, int& ch, int out_ch, int kh, int kw,
                    int stride, Padding pad, Rng& rng) {
  seq.emplace<Conv2d>(ch, out_ch, kh, kw, stride, pad, /*bias=*/false, rng);
  seq.emplace<BatchNorm2d>(out_ch);
  seq.emplace<Act>(Activation::RELU);
  ch = out_ch;
}

// 1x1 -> optional further convs, used to assemble every branch below
struct BranchBuilder {
  std::unique_ptr<Sequential> seq = std::make_unique<Sequential>();
  int ch;
  Rng& rng;

  BranchBuilder(int in_ch, Rng& r) : ch(in_ch), rng(r) {}

  BranchBuilder& conv(int out_ch, int kh, int kw, int stride = 1,
                      Padding pad = Padding::SAME) {
    conv_bn(*seq, ch, out_ch, kh, kw, stride, pad, rng);
    return *this;
  }
  BranchBuilder& avg_pool() {
    seq->emplace<AvgPool2d>(3, 1, Padding::SAME);
    return *this;
  }
  BranchBuilder& max_pool_stride2() {
    seq->emplace<MaxPool2d>(3, 2, Padding::VALID);
    return *this;
  }
  BranchBuilder& split(std::unique_ptr<Sequential> a, int a_ch,
                       std::unique_ptr<Sequential> b, int b_ch) {
    auto fork = std::make_unique<Branches>();
    fork->add(std::move(a));
    fork->add(std::move(b));
    seq->add(std::move(fork));
    ch = a_ch + b_ch;
    return *this;
  }
};

// Inception-A: 1x1 / 5x5 / double-3x3 / pooled-projection branches.
inline int block_a(Sequential& net, int in_ch, int pool_ch, Rng& rng) {
  auto mixed = std::make_unique<Branches>();
  BranchBuilder b0(in_ch, rng);
  b0.conv(64, 1, 1);
  BranchBuilder b1(in_ch, rng);
  b1.conv(48, 1, 1).conv(64, 5, 5);
  BranchBuilder b2(in_ch, rng);
  b2.conv(64, 1, 1).conv(96, 3, 3).conv(96, 3, 3);
  BranchBuilder b3(in_ch, rng);
  b3.avg_pool().conv(pool_ch, 1, 1);
  const int out = b0.ch + b1.ch + b2.ch + b3.ch;
  mixed->add(std::move(b0.seq)).add(std::move(b1.seq));
  mixed->add(std::move(b2.seq)).add(std::move(b3.seq));
  net.add(std::move(mixed));
  return out;
}

// Grid reduction between the A and B stages.
inline int reduction_a(Sequential& net, int in_ch, Rng& rng) {
  auto mixed = std::make_unique<Branches>();
  BranchBuilder b0(in_ch, rng);
  b0.conv(384, 3, 3, 2, Padding::VALID);
  BranchBuilder b1(in_ch, rng);
  b1.conv(64, 1, 1).conv(96, 3, 3).conv(96, 3, 3, 2, Padding::VALID);
  BranchBuilder b2(in_ch, rng);
  b2.max_pool_stride2();
  const int out = b0.ch + b1.ch + in_ch;
  mixed->add(std::move(b0.seq)).add(std::move(b1.seq)).add(std::move(b2.seq));
  net.add(std::move(mixed));
  return out;
}

// Inception-B with factorized 7x7 convolutions.
inline int block_b(Sequential& net, int in_ch, int mid_ch, Rng& rng) {
  auto mixed = std::make_unique<Branches>();
  BranchBuilder b0(in_ch, rng);
  b0.conv(192, 1, 1);
  BranchBuilder b1(in_ch, rng);
  b1.conv(mid_ch, 1, 1).conv(mid_ch, 1, 7).conv(192, 7, 1);
  BranchBuilder b2(in_ch, rng);
  b2.conv(mid_ch, 1, 1)
      .conv(mid_ch, 7, 1)
      .conv(mid_ch, 1, 7)
      .conv(mid_ch, 7, 1)
      .conv(192, 1, 7);
  BranchBuilder b3(in_ch, rng);
  b3.avg_pool().conv(192, 1, 1);
  const int out = b0.ch + b1.ch + b2.ch + b3.ch;
  mixed->add(std::move(b0.seq)).add(std::move(b1.seq));
  mixed->add(std::move(b2.seq)).add(std::move(b3.seq));
  net.add(std::move(mixed));
  return out;
}

// Grid reduction between the B and C stages.
inline int reduction_b(Sequential& net, int in_ch, Rng& rng) {
  auto mixed = std::make_unique<Branches>();
  BranchBuilder b0(in_ch, rng);
  b0.conv(192, 1, 1).conv(320, 3, 3, 2, Padding::VALID);
  BranchBuilder b1(in_ch, rng);
  b1.conv(192, 1, 1).conv(192, 1, 7).conv(192, 7, 1).conv(192, 3, 3, 2, Padding::VALID);
  BranchBuilder b2(in_ch, rng);
  b2.max_pool_stride2();
  const int out = 320 + 192 + in_ch;
  mixed->add(std::move(b0.seq)).add(std::move(b1.seq)).add(std::move(b2.seq));
  net.add(std::move(mixed));
  return out;
}

// Inception-C with expanded 3x3 filter banks split into 1x3 / 3x1 pairs.
inline int block_c(Sequential& net, int in_ch, Rng& rng) {
  auto mixed = std::make_unique<Branches>();
  BranchBuilder b0(in_ch, rng);
  b0.conv(320, 1, 1);

  BranchBuilder b1(in_ch, rng);
  b1.conv(384, 1, 1);
  {
    BranchBuilder l(384, rng), r(384, rng);
    l.conv(384, 1, 3);
    r.conv(384, 3, 1);
    b1.split(std::move(l.seq), 384, std::move(r.seq), 384);
  }

  BranchBuilder b2(in_ch, rng);
  b2.conv(448, 1, 1).conv(384, 3, 3);
  {
    BranchBuilder l(384, rng), r(384, rng);
    l.conv(384, 1, 3);
    r.conv(384, 3, 1);
    b2.split(std::move(l.seq), 384, std::move(r.seq), 384);
  }

  BranchBuilder b3(in_ch, rng);
  b3.avg_pool().conv(192, 1, 1);

  const int out = b0.ch + b1.ch + b2.ch + b3.ch;
  mixed->add(std::move(b0.seq)).add(std::move(b1.seq));
  mixed->add(std::move(b2.seq)).add(std::move(b3.seq));
  net.add(std::move(mixed));
  return out;
}

}  // namespace detail

inline std::unique_ptr<Sequential> build(Rng& rng) {
  using namespace detail;
  auto net = std::make_unique<Sequential>();
  int ch = 3;

  // stem
  conv_bn(*net, ch, 32, 3, 3, 2, Padding::VALID, rng);
  conv_bn(*net, ch, 32, 3, 3, 1, Padding::VALID, rng);
  conv_bn(*net, ch, 64, 3, 3, 1, Padding::SAME, rng);
  net->emplace<MaxPool2d>(3, 2, Padding::VALID);
  conv_bn(*net, ch, 80, 1, 1, 1, Padding::VALID, rng);
  conv_bn(*net, ch, 192, 3, 3, 1, Padding::VALID, rng);
  net->emplace<MaxPool2d>(3, 2, Padding::VALID);

  // mixed 0..2
  ch = block_a(*net, ch, 32, rng);
  ch = block_a(*net, ch, 64, rng);
  ch = block_a(*net, ch, 64, rng);
  // mixed 3
  ch = reduction_a(*net, ch, rng);
  // mixed 4..7
  ch = block_b(*net, ch, 128, rng);
  ch = block_b(*net, ch, 160, rng);
  ch = block_b(*net, ch, 160, rng);
  ch = block_b(*net, ch, 192, rng);
  // mixed 8
  ch = reduction_b(*net, ch, rng);
  // mixed 9..10
  ch = block_c(*net, ch, rng);
  ch = block_c(*net, ch, rng);

  // single-probability head
  net->emplace<GlobalAvgPool>();
  net->emplace<Dense>(ch, 1, rng);
  return net;
}

}  // namespace inception

}  // namespace gadet::nn
