/*
 * Copyright 2026 The Anchorfuse Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstring>

#include <doctest.h>

#include "anchorfuse/collab/collab.hpp"
#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/rng.hpp"

using namespace anchorfuse;
using namespace anchorfuse::collab;
using numeric::Rng;

namespace {

AnchorMessage random_message(Rng& rng, std::size_t n, std::uint16_t c) {
  AnchorMessage m;
  m.sender = static_cast<std::uint32_t>(rng.next());
  m.layer = 2;
  m.channels = c;
  for (std::size_t i = 0; i < n; ++i) {
    std::array<float, 8> b{};
    for (auto& v : b) v = static_cast<float>(rng.uniform(-50, 50));
    b[3] = b[4] = b[5] = 1.5f;
    b[6] = 0.6f;
    b[7] = 0.8f;
    m.boxes.push_back(b);
    m.confidences.push_back(static_cast<float>(rng.uniform(0, 1)));
    for (std::size_t q = 0; q < c; ++q) m.features.push_back(static_cast<float>(rng.uniform(-3, 3)));
  }
  return m;
}

std::size_t codec_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_message(bytes);
  } catch (const CodecError& e) {
    return e.offset();
  }
  FAIL("decode should have thrown");
  return 0;
}

}  // namespace

TEST_CASE("zero confidence network scores one half") {
  ParamStore s(1);
  add_confidence_params(s, "conf", 8);
  s.fill("conf", 0.0);
  Rng rng(2);
  Array f({5, 8});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.uniform(-4, 4);
  for (double v : anchor_confidence(s, "conf", f)) CHECK(v == 0.5);
}

TEST_CASE("top-k selection") {
  const std::vector<double> s{0.9, 0.1, 0.5};
  CHECK(select_topk(s, 2) == std::vector<std::size_t>{0, 2});
  CHECK(select_topk(s, 3) == std::vector<std::size_t>{0, 2, 1});
  const std::vector<double> tied{0.5, 0.7, 0.5, 0.5};
  CHECK(select_topk(tied, 3) == std::vector<std::size_t>{1, 0, 2});
  CHECK_THROWS_AS(select_topk(s, 0), std::out_of_range);
  CHECK_THROWS_AS(select_topk(s, 4), std::out_of_range);
}

TEST_CASE("threshold mask and message rows") {
  const std::vector<double> s{0.2, 0.5, 0.8};
  CHECK(confidence_mask(s, 0.5) == std::vector<std::uint8_t>{0, 1, 1});
  CHECK(confidence_mask(s, 0.9) == std::vector<std::uint8_t>{0, 0, 0});
  const std::vector<double> scores{0.9, 0.1, 0.5, 0.7};
  CHECK(message_rows(scores, 3, 0.6) == std::vector<std::size_t>{0, 3});
  CHECK(message_rows(scores, 3, 0.95).empty());
}

TEST_CASE("build_message keeps the selected rows as floats") {
  const std::vector<AnchorBox> anchors{AnchorBox::from_yaw(1, 2, 0, 1, 1, 1, 0),
                                       AnchorBox::from_yaw(3, 4, 0, 2, 2, 2, 0),
                                       AnchorBox::from_yaw(5, 6, 0, 1, 1, 1, 0)};
  const Array f = Array::matrix({{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}});
  const std::vector<double> scores{0.3, 0.9, 0.6};
  const auto m = build_message(7, 1, anchors, f, scores, 2, 0.5);
  REQUIRE(m.count() == 2);
  CHECK(m.sender == 7);
  CHECK(m.channels == 2);
  CHECK(m.boxes[0][0] == 3.0f);
  CHECK(m.boxes[1][0] == 5.0f);
  CHECK(m.confidences == std::vector<float>{0.9f, 0.6f});
  CHECK(m.features == std::vector<float>{0.3f, 0.4f, 0.5f, 0.6f});
}

TEST_CASE("wire format") {
  Rng rng(3);
  SUBCASE("header only") {
    AnchorMessage m;
    m.channels = 16;
    const auto bytes = encode_message(m);
    CHECK(bytes.size() == 16);
    CHECK(std::memcmp(bytes.data(), "ACM1", 4) == 0);
    CHECK(decode_message(bytes) == m);
  }
  SUBCASE("one record of width 16 is 100 bytes") {
    const auto bytes = encode_message(random_message(rng, 1, 16));
    CHECK(bytes.size() == 116);
    CHECK(message_bytes(1, 16) == 116);
  }
  SUBCASE("round trip and idempotence") {
    for (std::size_t n : {0, 1, 10, 37}) {
      const auto m = random_message(rng, n, 32);
      const auto bytes = encode_message(m);
      CHECK(bytes.size() == message_bytes(n, 32));
      const auto back = decode_message(bytes);
      CHECK(back == m);
      CHECK(encode_message(back) == bytes);
    }
  }
  SUBCASE("little endian header") {
    AnchorMessage m;
    m.sender = 0x01020304;
    m.layer = 0x0506;
    m.channels = 3;
    const auto b = encode_message(m);
    CHECK(b[4] == 0x04);
    CHECK(b[7] == 0x01);
    CHECK(b[8] == 0x06);
    CHECK(b[12] == 3);
  }
  SUBCASE("malformed buffers report an offset") {
    const auto good = encode_message(random_message(rng, 3, 4));  // records of 52 bytes
    auto bad = good;
    bad[0] = 'X';
    CHECK(codec_offset(bad) == 0);
    bad = good;
    bad[15] = 1;
    CHECK(codec_offset(bad) == 14);
    bad.assign(good.begin(), good.end() - 1);
    CHECK(codec_offset(bad) == 16 + 2 * 52);
    bad.assign(good.begin(), good.begin() + 10);
    CHECK(codec_offset(bad) == 10);
    bad = good;
    bad.push_back(0);
    CHECK(codec_offset(bad) == good.size());
  }
  SUBCASE("inconsistent arrays") {
    auto m = random_message(rng, 2, 4);
    m.features.pop_back();
    CHECK_THROWS_AS(encode_message(m), DimensionError);
  }
}

TEST_CASE("anchor encoder") {
  Rng rng(4);
  const auto msg = random_message(rng, 4, 8);
  ParamStore s(5);
  add_encoder_params(s, "enc", 8);
  const Normalizer norm{};

  SUBCASE("zero embeddings and identity transform pass the message through") {
    ParamStore z = s;
    z.fill("enc", 0.0);
    Tape tape;
    const auto set = anchor_encoder(tape, z, "enc", RigidTransform::identity(), msg, norm);
    REQUIRE(set.anchors.size() == 4);
    const Array& f = set.features.value();
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == static_cast<double>(msg.features[i]));
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(set.anchors[i].x == static_cast<double>(msg.boxes[i][0]));
      CHECK(set.anchors[i].y == static_cast<double>(msg.boxes[i][1]));
    }
  }
  SUBCASE("anchors move into the ego frame") {
    const auto t = RigidTransform::from_yaw(0, {10, -4, 0});
    Tape tape;
    const auto set = anchor_encoder(tape, s, "enc", t, msg, norm);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(set.anchors[i].x == doctest::Approx(msg.boxes[i][0] + 10.0));
      CHECK(set.anchors[i].y == doctest::Approx(msg.boxes[i][1] - 4.0));
    }
  }
  SUBCASE("features depend on the transform") {
    Tape tape;
    const Array a = anchor_encoder(tape, s, "enc", RigidTransform::identity(), msg, norm).features.value();
    const Array b = anchor_encoder(tape, s, "enc", RigidTransform::from_yaw(0.3, {1, 0, 0}), msg, norm)
                        .features.value();
    double diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
    CHECK(diff > 1e-6);
  }
  SUBCASE("empty message") {
    Tape tape;
    AnchorMessage empty;
    empty.channels = 8;
    CHECK(anchor_encoder(tape, s, "enc", RigidTransform::identity(), empty, norm).empty());
  }
}

TEST_CASE("locality aggregation") {
  const std::vector<AnchorBox> ego{AnchorBox::from_yaw(0, 0, 0, 2, 2, 2, 0),
                                   AnchorBox::from_yaw(20, 0, 0, 2, 2, 2, 0)};
  Tape tape;
  Var f = tape.constant(Array::matrix({{1, 2}, {3, 4}}));

  SUBCASE("contained center adds its feature once") {
    SelectedSet sel;
    sel.anchors = {AnchorBox::from_yaw(0.5, -0.5, 0, 1, 1, 1, 0)};
    sel.features = tape.constant(Array::matrix({{10, 20}}));
    const Array out = laaf(tape, ego, f, sel).value();
    CHECK(out == Array::matrix({{11, 22}, {3, 4}}));
  }
  SUBCASE("envelope is closed") {
    SelectedSet sel;
    sel.anchors = {AnchorBox::from_yaw(21, 1, 1, 1, 1, 1, 0)};
    sel.features = tape.constant(Array::matrix({{10, 20}}));
    CHECK(laaf(tape, ego, f, sel).value() == Array::matrix({{1, 2}, {13, 24}}));
  }
  SUBCASE("far anchors and the empty set leave features alone") {
    SelectedSet sel;
    sel.anchors = {AnchorBox::from_yaw(10, 0, 0, 1, 1, 1, 0)};
    sel.features = tape.constant(Array::matrix({{10, 20}}));
    const Array out = laaf(tape, ego, f, sel).value();
    CHECK(out == Array::matrix({{1, 2}, {3, 4}}));
    CHECK(laaf(tape, ego, f, SelectedSet{}).id() == f.id());
  }
  SUBCASE("rotated anchors use the axis-aligned envelope") {
    const std::vector<AnchorBox> rotated{AnchorBox::from_yaw(0, 0, 0, 2, 2, 2, 0.7853981633974483)};
    SelectedSet sel;
    // sqrt(2) > 1.3 > 1: outside the unrotated box, inside the envelope.
    sel.anchors = {AnchorBox::from_yaw(1.3, 0, 0, 1, 1, 1, 0)};
    sel.features = tape.constant(Array::matrix({{1, 1}}));
    CHECK(containment_matrix(rotated, sel.anchors).at(0, 0) == 1.0);
  }
}

TEST_CASE("bandwidth accounting") {
  CHECK(message_bytes(10, 64) - kMessageHeaderBytes == 2920);
  CHECK(feature_map_bytes(153.6, 96, 0.4, 64) == 23592960.0);
  CHECK(feature_map_bytes(307.2, 192, 0.4, 64) == 4 * 23592960.0);
  const auto r = bandwidth_report({{0, 1, 10, message_bytes(10, 64)}, {1, 1, 0, message_bytes(0, 64)}}, 153.6,
                                  96, 0.4, 64);
  CHECK(r.total_bytes == 2936 + 16);
  CHECK(r.ratio == doctest::Approx((2936.0 + 16.0) / 2 / 23592960.0).epsilon(1e-15));
  CHECK(r.ratio < 1e-3);
}
