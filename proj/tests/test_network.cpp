#include <doctest.h>

#include <cmath>
#include <random>

#include "ghn/config.hpp"
#include "ghn/network.hpp"
#include "ghn/train.hpp"

using namespace ghn;

namespace {

const char* kMnistArch = "cv[1,5,5,16]-pool-cv[16,5,5,64]-pool-fc[1024]-fc[1024,10]";

NetworkSpec spec_for(const std::string& arch, std::size_t side, std::size_t ch) {
  NetworkSpec s;
  s.height = side;
  s.width = side;
  s.channels = ch;
  s.layers = parse_architecture(arch);
  resolve_shapes(s);
  return s;
}

}  // namespace

TEST_CASE("architecture parsing") {
  const auto layers = parse_architecture(kMnistArch);
  REQUIRE(layers.size() == 6);
  CHECK(layers[0].kind == LayerKind::conv);
  CHECK(layers[0].in == 1);
  CHECK(layers[0].kh == 5);
  CHECK(layers[0].out == 16);
  CHECK(layers[1].kind == LayerKind::pool);
  CHECK(layers[4].kind == LayerKind::dense);
  CHECK(layers[4].in == 0);
  CHECK(layers[5].in == 1024);
  CHECK(render_architecture(layers) == kMnistArch);

  for (const char* bad : {"cv[1,5,5]", "fc[]", "pool[2]", "cv[1,5,5,x]", "", "fc[10]-", "dense[3]"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_architecture(bad), ArchitectureError);
  }
  try {
    parse_architecture("cv[1,5,5,16]-cv[1,5,5]");
  } catch (const ArchitectureError& e) {
    CHECK(e.token() == "cv[1,5,5]");
  }
}

TEST_CASE("MNIST shapes 28 -> 14 -> 7 -> 1024 -> 10") {
  auto s = spec_for(kMnistArch, 28, 1);
  CHECK(s.weighted_layers() == 4);
  CHECK(s.classes() == 10);
  CHECK(s.layers[4].in == 7 * 7 * 64);
  CHECK(layer_output_shape(s, 0, 2) == Shape{2, 28, 28, 16});
  CHECK(layer_output_shape(s, 1, 2) == Shape{2, 14, 14, 16});
  CHECK(layer_output_shape(s, 3, 2) == Shape{2, 7, 7, 64});
  CHECK(layer_output_shape(s, 4, 2) == Shape{2, 1024});

  Network<float> net(s, 1);
  CHECK(net.layer_names() == std::vector<std::string>{"conv1", "conv2", "fc3", "fc4"});
  Tape<float> tape;
  std::vector<LayerOutput<float>> trace;
  const auto logits = net.forward(tape, Tensor<float>(Shape{2, 28, 28, 1}, 0.3f), true, &trace);
  CHECK(logits.value().shape() == Shape{2, 10});
  CHECK(trace.size() == 4);
  CHECK(trace[0].layer == "conv1");
  CHECK(trace[0].value.value().shape() == Shape{2, 28, 28, 16});
}

TEST_CASE("shape mismatches name the layer") {
  NetworkSpec s;
  s.layers = parse_architecture("cv[1,5,5,16]-cv[8,3,3,4]-fc[10]");
  try {
    resolve_shapes(s);
    FAIL("expected a shape error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("repaired CIFAR-10 architecture resolves") {
  auto s = spec_for(
      "cv[3,3,3,64]-cv[64,5,5,256]-pool-cv[256,5,5,256]-pool-fc[1024]-fc[1024,512]-fc[512,10]", 32,
      3);
  CHECK(s.layers[5].in == 8 * 8 * 256);
  CHECK(s.classes() == 10);
  CHECK(s.weighted_layers() == 6);
}

TEST_CASE("all-0.5 weights absorb the input: uniform logits, loss ln 10") {
  for (double gain : {0.0, 5.0}) {
    auto s = spec_for("cv[1,3,3,4]-pool-fc[10]", 8, 1);
    s.weight_gain = gain;
    Network<double> net(s, 3);
    for (auto* p : net.parameters()) {
      if (p->name.ends_with(".kernel") || p->name.ends_with(".weights")) {
        // Effective weights are 0.5 whatever the scale.
        const double scale = ghn_weight_scale(s, s.layers[p->name[0] == 'c' ? 0 : 2]);
        for (auto& v : p->value.vec()) v = 0.5 / scale;
      }
    }
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    Tensor<double> img(Shape{3, 8, 8, 1});
    for (auto& v : img.vec()) v = u(rng);
    Tape<double> tape;
    const auto logits = net.forward(tape, img, false);
    for (double v : logits.value().vec()) CHECK(v == doctest::Approx(-0.5));
    const std::vector<int> labels{0, 3, 9};
    CHECK(net.loss(logits, labels).value().item() == doctest::Approx(std::log(10.0)));
  }
}

TEST_CASE("weight scale") {
  auto s = spec_for(kMnistArch, 28, 1);
  CHECK(ghn_weight_scale(s, s.layers[0]) == doctest::Approx(5.0 * std::sqrt(25.0)));
  CHECK(ghn_weight_scale(s, s.layers[4]) == doctest::Approx(5.0 * std::sqrt(3136.0)));
  s.weight_gain = 0;
  CHECK(ghn_weight_scale(s, s.layers[0]) == 1.0);
  s.weight_gain = 5;
  s.kind = NetKind::baseline;
  CHECK(ghn_weight_scale(s, s.layers[0]) == 1.0);
}

TEST_CASE("seeded initialization") {
  auto s = spec_for("cv[1,3,3,4]-pool-fc[10]", 8, 1);
  Network<float> a(s, 9), b(s, 9), c(s, 10);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  CHECK(pa[0]->value != pc[0]->value);
  // Ratios start at r0 = 0.05, one per filter for conv.
  const auto* r = a.find("conv1.r");
  REQUIRE(r != nullptr);
  CHECK(r->value.shape() == Shape{4});
  CHECK(r->value[0] == doctest::Approx(0.05));
  CHECK(r->clamp_unit);
}

TEST_CASE("baseline network with batch norm") {
  auto s = spec_for("cv[1,3,3,4]-pool-fc[10]", 8, 1);
  s.kind = NetKind::baseline;
  s.batch_norm = true;
  for (auto& l : s.layers) l.activation = Activation::relu;
  Network<double> net(s, 2);
  CHECK(net.find("conv1.bias") != nullptr);
  CHECK(net.find("conv1.bn.gamma") != nullptr);
  CHECK(net.find("fc2.bn.gamma") == nullptr);  // no normalization on the output layer
  Tape<double> tape;
  const auto logits = net.forward(tape, Tensor<double>(Shape{4, 8, 8, 1}, 0.2), true);
  CHECK(logits.value().shape() == Shape{4, 10});
}

TEST_CASE("predict picks the first maximum") {
  Tensor<float> l(Shape{2, 3}, std::vector<float>{0.1f, 0.7f, 0.7f, 2.0f, -1.0f, 0.0f});
  CHECK(predict(l) == std::vector<int>{1, 0});
}
