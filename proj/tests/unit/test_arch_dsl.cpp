#include <doctest.h>

#include <fstream>

#include "microresnet/arch.hpp"
#include "microresnet/errors.hpp"

using namespace microresnet;
using L = LayerSpec;

namespace {

const ImageShape kInput{3, 64, 64};

ArchSpec spec_of(std::initializer_list<LayerSpec> layers) { return ArchSpec{"", layers}; }

ArchSpec random_spec(Rng& rng) {
  ArchSpec s;
  const std::size_t n = 1 + rng.uniform_index(12);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t v = 1 + rng.uniform_index(512);
    switch (rng.uniform_index(5)) {
      case 0: s.layers.push_back(L::conv(v)); break;
      case 1: s.layers.push_back(L::bb(v)); break;
      case 2: s.layers.push_back(L::avg(1 + rng.uniform_index(4))); break;
      case 3: s.layers.push_back(L::max(1 + rng.uniform_index(4))); break;
      default: s.layers.push_back(L::dropout(static_cast<double>(rng.uniform_index(100)) / 100.0)); break;
    }
    if (rng.bernoulli(0.3)) s.layers.push_back(s.layers.back());
  }
  s.layers.push_back(L::fc(1 + rng.uniform_index(300)));
  return s;
}

int parse_error_line(std::string_view text) {
  try {
    parse_arch(text);
  } catch (const ParseError& e) {
    return static_cast<int>(e.line());
  }
  return -1;
}

}  // namespace

TEST_CASE("parse_arch: repeat expansion and notation variants") {
  CHECK(parse_arch("(Conv 64) x 2; FC 10").layers ==
        std::vector<LayerSpec>{L::conv(64), L::conv(64), L::fc(10)});
  CHECK(parse_arch("(conv 64) \xC3\x97 2\nfc 10") == parse_arch("(CONV 64) X 2\nFC 10"));
  CHECK(parse_arch("BB512; Avg2; FC 3") == spec_of({L::bb(512), L::avg(2), L::fc(3)}));
  CHECK(parse_arch("# comment\n\nConv 8  # trailing\nDropout\nDropout 0.25\nFC 2\n") ==
        spec_of({L::conv(8), L::dropout(0.5), L::dropout(0.25), L::fc(2)}));
  CHECK(parse_arch("FC 200").layers.size() == 1);
}

TEST_CASE("parse_arch: the net1 column expands to 14 entries") {
  const ArchSpec net1 = parse_arch(*preset_text("net1"), "net1");
  CHECK(net1 == spec_of({L::conv(64), L::conv(64), L::avg(2), L::bb(64), L::bb(128), L::avg(2), L::bb(128),
                         L::bb(256), L::avg(2), L::bb(256), L::avg(2), L::bb(512), L::avg(2), L::fc(200)}));
}

TEST_CASE("parse_arch: errors carry line numbers") {
  CHECK(parse_error_line("FC 200; Conv 64") == 1);
  CHECK(parse_error_line("Conv 64\nFC 200\nConv 64") == 2);
  CHECK(parse_error_line("Conv 64\nSoftmax 3\nFC 2") == 2);
  CHECK(parse_error_line("Conv 64\n(Conv 64) x\nFC 2") == 2);
  CHECK(parse_error_line("Conv 64\n(Conv 64) x 0\nFC 2") == 2);
  CHECK(parse_error_line("Conv 0\nFC 2") == 1);
  CHECK(parse_error_line("Conv\nFC 2") == 1);
  CHECK(parse_error_line("Conv 8") == 1);
  CHECK(parse_error_line("") == 1);
  CHECK(parse_error_line("Conv 8\nFC 2\nFC 2") >= 2);
  CHECK(parse_error_line("Dropout 1.5\nFC 2") == 1);
}

TEST_CASE("count_layers reproduces the published counts where the rule allows") {
  CHECK(count_layers(*find_preset("net1")) == 15);
  CHECK(count_layers(*find_preset("net2")) == 12);
  CHECK(count_layers(*find_preset("net3")) == 17);
  CHECK(count_layers(*find_preset("net6")) == 15);
  CHECK(count_layers(parse_arch("FC 200")) == 1);

  CHECK(count_layers(*find_preset("net4")) == 19);
  CHECK(count_layers(*find_preset("net5")) == 13);
  CHECK(published_layer_count_mismatch("net4") == 21);
  CHECK(published_layer_count_mismatch("net5") == 15);
  for (const char* name : {"net1", "net2", "net3", "net6"}) CHECK_FALSE(published_layer_count_mismatch(name));
}

TEST_CASE("infer_shapes on 64x64 inputs") {
  const auto net1 = infer_shapes(*find_preset("net1"), kInput);
  REQUIRE(net1.size() == 14);
  CHECK(net1[12] == Shape{512, 2, 2});
  CHECK(net1[13] == Shape{200});

  const auto net2 = infer_shapes(*find_preset("net2"), kInput);
  CHECK(net2[9] == Shape{512, 4, 4});
  CHECK(net2[10] == Shape{512, 1, 1});

  for (const auto& name : preset_names()) CHECK_NOTHROW(infer_shapes(*find_preset(name), kInput));

  CHECK_THROWS_AS(infer_shapes(parse_arch("Avg 2; FC 2"), ImageShape{3, 63, 63}), ShapeError);
  CHECK_THROWS_AS(infer_shapes(parse_arch("Avg 4; Avg 4; FC 2"), ImageShape{3, 4, 4}), ShapeError);
  try {
    infer_shapes(parse_arch("Conv 8\nAvg 2\nFC 2"), ImageShape{3, 63, 64});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("Avg 2") != std::string::npos);
  }
}

TEST_CASE("count_params") {
  CHECK(count_params(parse_arch("FC 200"), ImageShape{512, 2, 2}) == 409800);
  CHECK(count_params(parse_arch("Conv 64; FC 1"), kInput) - (64 * 64 * 64 + 1) == 1792);
  CHECK(count_params(*find_preset("net3"), kInput) < count_params(*find_preset("net1"), kInput));
  CHECK(count_params(parse_arch("BB 8; FC 1"), ImageShape{4, 2, 2}) == (8 * 4 * 9 + 8) + (8 * 8 * 9 + 8) + 32 + 1);
}

TEST_CASE("build_network") {
  Rng rng(0);
  const ArchSpec net1 = *find_preset("net1");
  const auto net = build_network<float>(net1, kInput, rng);
  CHECK(net.parameterized_layer_count() == 15);
  CHECK(net.parameter_count() == count_params(net1, kInput));
  const auto& first_bb = std::get<BasicBlock<float>>(net.layers()[3]);
  const auto& second_bb = std::get<BasicBlock<float>>(net.layers()[4]);
  CHECK(first_bb.shortcut.kind == ShortcutAdapter::Kind::identity);
  CHECK(second_bb.shortcut.kind == ShortcutAdapter::Kind::pad_channels);
  CHECK(second_bb.shortcut.channels == 128);

  Rng again(0);
  const auto twin = build_network<float>(net1, kInput, again);
  const auto a = net.parameters(), b = twin.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same_values(*a[i], *b[i]));

  Tensor<float> x(Shape{1, 3, 64, 64}, 0.5f);
  CHECK(net.predict(x).shape() == Shape{1, 200});

  CHECK_THROWS_AS(build_network<float>(parse_arch("Avg 2; FC 2"), ImageShape{3, 63, 63}, rng), ShapeError);
}

TEST_CASE("to_plain_convnet") {
  const ArchSpec plain = to_plain_convnet(*find_preset("net1"));
  CHECK(plain == *find_preset("net6"));
  const ArchSpec no_bb = parse_arch("Conv 8; Max 2; Dropout; FC 3");
  CHECK(to_plain_convnet(no_bb) == no_bb);
}

TEST_CASE("property: render/parse round trip and plain layer count") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const ArchSpec s = random_spec(rng);
    CAPTURE(render_arch(s));
    CHECK(parse_arch(render_arch(s)) == s);
    CHECK(count_layers(to_plain_convnet(s)) == count_layers(s));
  }
  for (const auto& name : preset_names()) {
    const ArchSpec s = *find_preset(name);
    CHECK(parse_arch(render_arch(s)) == s);
  }
}

TEST_CASE("shipped preset files match the built-in presets") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    const std::string path = std::string(MICRORESNET_SOURCE_DIR) + "/presets/" + name + ".arch";
    CHECK(load_arch(path) == *find_preset(name));
    CHECK(load_arch(name) == *find_preset(name));
  }
  try {
    load_arch("net7");
    FAIL("expected ValueError");
  } catch (const ValueError& e) {
    CHECK(std::string(e.what()).find("net1") != std::string::npos);
  }
}

TEST_CASE("image shape text") {
  CHECK(parse_image_shape("3x64x64") == ImageShape{3, 64, 64});
  CHECK(to_string(ImageShape{1, 28, 28}) == "1x28x28");
  CHECK_THROWS(parse_image_shape("3x64"));
  CHECK_THROWS(parse_image_shape("0x4x4"));
}
