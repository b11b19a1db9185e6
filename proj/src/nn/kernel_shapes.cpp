#include <string>

#include "scalenet/kernels.hpp"

namespace scalenet::nn {

Conv2dShape conv2d_shape(const Shape& input, const Shape& weight, ConvGeometry geom) {
  auto fail = [&](const std::string& why) {
    throw ShapeError("conv2d: " + why + " (input " + shape_str(input) + ", weight " +
                     shape_str(weight) + ")");
  };
  if (input.size() != 4) fail("input must be NCHW");
  if (weight.size() != 4) fail("weight must be (C_out, C_in, kH, kW)");
  if (input[1] != weight[1]) fail("channel counts disagree");
  if (geom.stride < 1 || geom.dilation < 1 || geom.padding < 0) fail("invalid stride/dilation/padding");

  Conv2dShape s;
  s.batch = input[0];
  s.in_channels = input[1];
  s.in_h = input[2];
  s.in_w = input[3];
  s.out_channels = weight[0];
  s.kernel_h = weight[2];
  s.kernel_w = weight[3];
  s.geom = geom;
  const long span_h = static_cast<long>(s.in_h) + 2L * geom.padding -
                      static_cast<long>(geom.dilation) * (static_cast<long>(s.kernel_h) - 1) - 1;
  const long span_w = static_cast<long>(s.in_w) + 2L * geom.padding -
                      static_cast<long>(geom.dilation) * (static_cast<long>(s.kernel_w) - 1) - 1;
  if (span_h < 0 || span_w < 0) fail("effective kernel does not fit the padded input");
  s.out_h = static_cast<std::size_t>(span_h / geom.stride + 1);
  s.out_w = static_cast<std::size_t>(span_w / geom.stride + 1);
  return s;
}

CorrelationShape correlation_shape(const Shape& src, const Shape& tgt) {
  if (src.size() != 4 || src != tgt) {
    throw ShapeError("correlate: feature maps must share an NCHW shape (got " + shape_str(src) +
                     " and " + shape_str(tgt) + ")");
  }
  return {src[0], src[1], src[2], src[3]};
}

}  // namespace scalenet::nn
