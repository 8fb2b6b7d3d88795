#include "f0lab/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <utility>

#include "f0lab/kernels.hpp"
#include "f0lab/text_io.hpp"

namespace f0lab::neural {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double act_deriv(Act act, double a) {
  switch (act) {
    case Act::relu:
      return a > 0.0 ? 1.0 : 0.0;
    case Act::tanh:
      return 1.0 - a * a;
    case Act::identity:
      return 1.0;
  }
  return 1.0;
}

void apply_act(Act act, Vec& v) {
  switch (act) {
    case Act::relu:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Act::tanh:
      for (double& x : v) x = std::tanh(x);
      break;
    case Act::identity:
      break;
  }
}

// ---------------------------------------------------------------------------
// Feature encoding
// ---------------------------------------------------------------------------

bool in_seq1(corpus::FeatureLevel level) {
  return level == corpus::FeatureLevel::phone ||
         level == corpus::FeatureLevel::syllable ||
         level == corpus::FeatureLevel::phrase;
}

bool in_seq2(corpus::FeatureLevel level) {
  return level == corpus::FeatureLevel::word ||
         level == corpus::FeatureLevel::syllable;
}

struct CatUse {
  int feature = 0;
  int row = 0;
  int offset = 0;
};

struct EncodedUtt {
  std::vector<Vec> x1, x2;
  std::vector<std::vector<CatUse>> cat1, cat2;  // per syllable
  std::vector<int> word_rows;                   // per syllable
  int word_offset = 0;
};

void encode_row(const FeatureEncoder& enc, const corpus::FeatureSchema& schema,
                const std::vector<int>& feature_list,
                const corpus::SyllableRecord& syl, Vec& out,
                std::vector<CatUse>& uses) {
  int off = 0;
  for (int fi : feature_list) {
    const corpus::FeatureDef& def = schema.at(fi);
    if (def.is_categorical()) {
      int k = static_cast<int>(def.categorical().values.size());
      int code = std::get<int>(syl.features[fi]);
      int row = (code >= 0 && code < k) ? code : k;
      const Mat& table = enc.tables[fi];
      for (int j = 0; j < enc.emb_dim; ++j) out[off + j] = table.at(row, j);
      uses.push_back({fi, row, off});
      off += enc.emb_dim;
    } else {
      double v = std::get<double>(syl.features[fi]);
      out[off] = (v - enc.num_mean[fi]) / enc.num_std[fi];
      off += 1;
    }
  }
}

EncodedUtt encode_utt(const FeatureEncoder& enc,
                      const corpus::FeatureSchema& schema,
                      const corpus::UtteranceRecord& utt) {
  const std::size_t t_count = utt.syllables.size();
  require(t_count > 0, ErrorCode::mismatch, "utterance '", utt.id,
          "': no syllables to encode");
  EncodedUtt e;
  e.x1.assign(t_count, Vec(enc.seq1_dim(), 0.0));
  e.x2.assign(t_count, Vec(enc.seq2_dim(), 0.0));
  e.cat1.resize(t_count);
  e.cat2.resize(t_count);
  e.word_rows.resize(t_count);
  e.word_offset = enc.seq2_dim() - enc.emb_dim;
  for (std::size_t t = 0; t < t_count; ++t) {
    const corpus::SyllableRecord& syl = utt.syllables[t];
    require(syl.features.size() == schema.size(), ErrorCode::mismatch,
            "utterance '", utt.id, "': syllable ", t, " carries ",
            syl.features.size(), " features, schema has ", schema.size());
    encode_row(enc, schema, enc.seq1_features, syl, e.x1[t], e.cat1[t]);
    encode_row(enc, schema, enc.seq2_features, syl, e.x2[t], e.cat2[t]);
    int wi = syl.word_index;
    int surface = (wi >= 0 && wi < static_cast<int>(utt.words.size()))
                      ? utt.words[wi].surface_id
                      : -1;
    int row = enc.word_slot(surface);
    e.word_rows[t] = row;
    for (int j = 0; j < enc.emb_dim; ++j)
      e.x2[t][e.word_offset + j] = enc.word_table.at(row, j);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Forward caches
// ---------------------------------------------------------------------------

struct StepCache {
  Vec i, f, o, g, c, tc;
};

struct DirCache {
  std::vector<StepCache> steps;
  std::vector<Vec> h;
};

struct RnnCache {
  DirCache fwd, bwd;
  std::vector<Vec> out;
  bool bidir = false;
};

struct MLPStepCache {
  std::vector<Vec> a;  // activation per layer
};

void gates_forward(const LSTMCell& cell, const Vec& x, const Vec& h_prev,
                   const Vec& c_prev, StepCache& sc, Vec& h_out) {
  const std::size_t hd = static_cast<std::size_t>(cell.hidden);
  const std::size_t in = static_cast<std::size_t>(cell.in);
  sc.i = cell.bi;
  sc.f = cell.bf;
  sc.o = cell.bo;
  sc.g = cell.bg;
  kernels::matvec_acc(cell.wxi.data(), hd, in, x.data(), sc.i.data());
  kernels::matvec_acc(cell.whi.data(), hd, hd, h_prev.data(), sc.i.data());
  kernels::matvec_acc(cell.wxf.data(), hd, in, x.data(), sc.f.data());
  kernels::matvec_acc(cell.whf.data(), hd, hd, h_prev.data(), sc.f.data());
  kernels::matvec_acc(cell.wxo.data(), hd, in, x.data(), sc.o.data());
  kernels::matvec_acc(cell.who.data(), hd, hd, h_prev.data(), sc.o.data());
  kernels::matvec_acc(cell.wxg.data(), hd, in, x.data(), sc.g.data());
  kernels::matvec_acc(cell.whg.data(), hd, hd, h_prev.data(), sc.g.data());
  sc.c.resize(hd);
  sc.tc.resize(hd);
  h_out.resize(hd);
  for (std::size_t k = 0; k < hd; ++k) {
    sc.i[k] = sigmoid(sc.i[k]);
    sc.f[k] = sigmoid(sc.f[k]);
    sc.o[k] = sigmoid(sc.o[k]);
    sc.g[k] = std::tanh(sc.g[k]);
    sc.c[k] = sc.f[k] * c_prev[k] + sc.i[k] * sc.g[k];
    sc.tc[k] = std::tanh(sc.c[k]);
    h_out[k] = sc.o[k] * sc.tc[k];
  }
}

void dir_forward(const LSTMCell& cell, const std::vector<Vec>& xs, bool reverse,
                 DirCache& cache) {
  const std::size_t t_count = xs.size();
  cache.steps.assign(t_count, {});
  cache.h.assign(t_count, Vec());
  Vec zero_h(cell.hidden, 0.0), zero_c(cell.hidden, 0.0);
  for (std::size_t s = 0; s < t_count; ++s) {
    std::size_t idx = reverse ? t_count - 1 - s : s;
    const Vec& h_prev = s == 0 ? zero_h : cache.h[s - 1];
    const Vec& c_prev = s == 0 ? zero_c : cache.steps[s - 1].c;
    gates_forward(cell, xs[idx], h_prev, c_prev, cache.steps[s], cache.h[s]);
  }
}

void rnn_forward(const BLSTM& net, bool bidir, const std::vector<Vec>& xs,
                 RnnCache& cache) {
  cache.bidir = bidir;
  dir_forward(net.fwd, xs, false, cache.fwd);
  if (bidir) dir_forward(net.bwd, xs, true, cache.bwd);
  const std::size_t t_count = xs.size();
  const int hd = net.fwd.hidden;
  const int out_dim = bidir ? 2 * hd : hd;
  cache.out.assign(t_count, Vec(out_dim, 0.0));
  for (std::size_t t = 0; t < t_count; ++t) {
    std::copy(cache.fwd.h[t].begin(), cache.fwd.h[t].end(),
              cache.out[t].begin());
    if (bidir) {
      const Vec& hb = cache.bwd.h[t_count - 1 - t];
      std::copy(hb.begin(), hb.end(), cache.out[t].begin() + hd);
    }
  }
}

void mlp_forward_step(const std::vector<DenseLayer>& mlp, const Vec& x,
                      MLPStepCache& mc) {
  mc.a.resize(mlp.size());
  const Vec* cur = &x;
  for (std::size_t l = 0; l < mlp.size(); ++l) {
    const DenseLayer& layer = mlp[l];
    mc.a[l] = layer.b;
    kernels::matvec_acc(layer.w.data(), layer.w.rows, layer.w.cols, cur->data(),
                        mc.a[l].data());
    apply_act(layer.act, mc.a[l]);
    cur = &mc.a[l];
  }
}

struct ForwardCache {
  EncodedUtt enc;
  std::vector<Vec> xin;  // concatenated rows, baselines only
  RnnCache rnn1, rnn2;
  std::vector<MLPStepCache> mlp1, mlp2;
  PredictionBundle bundle;
};

contour::RepresentationSpec delta_spec(contour::DeltaKind delta) {
  contour::RepresentationSpec rs;
  rs.base = contour::BaseKind::orif0;
  rs.delta = delta;
  return rs;
}

std::vector<Vec> totals_as_bases(const std::vector<Contour>& totals) {
  std::vector<Vec> bases(totals.size());
  for (std::size_t t = 0; t < totals.size(); ++t)
    bases[t].assign(totals[t].begin(), totals[t].end());
  return bases;
}

void forward_all(const NeuralModel& model, const corpus::UtteranceRecord& utt,
                 contour::DeltaKind delta, ForwardCache& fc) {
  fc.enc = encode_utt(model.enc, model.schema, utt);
  const std::size_t t_count = utt.syllables.size();
  PredictionBundle& b = fc.bundle;
  b.base.assign(t_count, Contour{});
  b.residual.assign(t_count, Contour{});
  b.total.assign(t_count, Contour{});
  fc.mlp1.assign(t_count, {});

  if (model.kind == NetKind::additive) {
    rnn_forward(model.net1, true, fc.enc.x1, fc.rnn1);
    rnn_forward(model.net2, true, fc.enc.x2, fc.rnn2);
    fc.mlp2.assign(t_count, {});
    for (std::size_t t = 0; t < t_count; ++t) {
      mlp_forward_step(model.mlp1, fc.rnn1.out[t], fc.mlp1[t]);
      mlp_forward_step(model.mlp2, fc.rnn2.out[t], fc.mlp2[t]);
      const Vec& r1 = fc.mlp1[t].a.back();
      const Vec& r2 = fc.mlp2[t].a.back();
      for (int k = 0; k < corpus::kContourPoints; ++k) {
        b.base[t][k] = kOutputGain * r1[k];
        b.residual[t][k] = kOutputGain * r2[k];
        b.total[t][k] = b.base[t][k] + b.residual[t][k];
      }
    }
  } else {
    fc.xin.assign(t_count, Vec());
    for (std::size_t t = 0; t < t_count; ++t) {
      fc.xin[t] = fc.enc.x1[t];
      fc.xin[t].insert(fc.xin[t].end(), fc.enc.x2[t].begin(),
                       fc.enc.x2[t].end());
    }
    const std::vector<Vec>* head_in = &fc.xin;
    if (model.kind == NetKind::lstm) {
      rnn_forward(model.net1, false, fc.xin, fc.rnn1);
      head_in = &fc.rnn1.out;
    } else if (model.kind == NetKind::blstm) {
      rnn_forward(model.net1, true, fc.xin, fc.rnn1);
      head_in = &fc.rnn1.out;
    }
    for (std::size_t t = 0; t < t_count; ++t) {
      mlp_forward_step(model.mlp1, (*head_in)[t], fc.mlp1[t]);
      const Vec& r1 = fc.mlp1[t].a.back();
      for (int k = 0; k < corpus::kContourPoints; ++k) {
        b.base[t][k] = kOutputGain * r1[k];
        b.total[t][k] = b.base[t][k];
      }
    }
  }
  b.delta = contour::sequence_deltas(delta_spec(delta),
                                     totals_as_bases(b.total));
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

void mlp_backward_step(const std::vector<DenseLayer>& mlp,
                       std::vector<DenseLayer>& grads, const Vec& input,
                       const MLPStepCache& mc, Vec da, Vec& dinput) {
  for (int l = static_cast<int>(mlp.size()) - 1; l >= 0; --l) {
    const DenseLayer& layer = mlp[l];
    DenseLayer& gl = grads[l];
    const Vec& a = mc.a[l];
    for (std::size_t k = 0; k < da.size(); ++k)
      da[k] *= act_deriv(layer.act, a[k]);
    const Vec& layer_in = l == 0 ? input : mc.a[l - 1];
    kernels::ger_acc(gl.w.data(), layer.w.rows, layer.w.cols, da.data(),
                     layer_in.data());
    kernels::axpy(1.0, da.data(), gl.b.data(), da.size());
    if (l == 0) {
      kernels::matvec_t_acc(layer.w.data(), layer.w.rows, layer.w.cols,
                            da.data(), dinput.data());
    } else {
      Vec prev(layer.w.cols, 0.0);
      kernels::matvec_t_acc(layer.w.data(), layer.w.rows, layer.w.cols,
                            da.data(), prev.data());
      da = std::move(prev);
    }
  }
}

void dir_backward(const LSTMCell& cell, LSTMCell& gcell,
                  const std::vector<Vec>& xs, const DirCache& cache,
                  const std::vector<Vec>& dh_out, bool reverse,
                  std::vector<Vec>& dxs) {
  const std::size_t t_count = xs.size();
  const std::size_t hd = static_cast<std::size_t>(cell.hidden);
  Vec zero_h(hd, 0.0), zero_c(hd, 0.0);
  Vec dh_acc(hd, 0.0), dc_acc(hd, 0.0);
  Vec dzi(hd), dzf(hd), dzo(hd), dzg(hd);
  for (std::size_t s = t_count; s-- > 0;) {
    std::size_t idx = reverse ? t_count - 1 - s : s;
    const StepCache& sc = cache.steps[s];
    const Vec& h_prev = s == 0 ? zero_h : cache.h[s - 1];
    const Vec& c_prev = s == 0 ? zero_c : cache.steps[s - 1].c;
    for (std::size_t k = 0; k < hd; ++k) {
      double dh = dh_out[idx][k] + dh_acc[k];
      double do_ = dh * sc.tc[k];
      double dc = dc_acc[k] + dh * sc.o[k] * (1.0 - sc.tc[k] * sc.tc[k]);
      double di = dc * sc.g[k];
      double dg = dc * sc.i[k];
      double df = dc * c_prev[k];
      dc_acc[k] = dc * sc.f[k];
      dzi[k] = di * sc.i[k] * (1.0 - sc.i[k]);
      dzf[k] = df * sc.f[k] * (1.0 - sc.f[k]);
      dzo[k] = do_ * sc.o[k] * (1.0 - sc.o[k]);
      dzg[k] = dg * (1.0 - sc.g[k] * sc.g[k]);
    }
    const std::size_t in = static_cast<std::size_t>(cell.in);
    const Vec& x = xs[idx];
    kernels::ger_acc(gcell.wxi.data(), hd, in, dzi.data(), x.data());
    kernels::ger_acc(gcell.whi.data(), hd, hd, dzi.data(), h_prev.data());
    kernels::axpy(1.0, dzi.data(), gcell.bi.data(), hd);
    kernels::ger_acc(gcell.wxf.data(), hd, in, dzf.data(), x.data());
    kernels::ger_acc(gcell.whf.data(), hd, hd, dzf.data(), h_prev.data());
    kernels::axpy(1.0, dzf.data(), gcell.bf.data(), hd);
    kernels::ger_acc(gcell.wxo.data(), hd, in, dzo.data(), x.data());
    kernels::ger_acc(gcell.who.data(), hd, hd, dzo.data(), h_prev.data());
    kernels::axpy(1.0, dzo.data(), gcell.bo.data(), hd);
    kernels::ger_acc(gcell.wxg.data(), hd, in, dzg.data(), x.data());
    kernels::ger_acc(gcell.whg.data(), hd, hd, dzg.data(), h_prev.data());
    kernels::axpy(1.0, dzg.data(), gcell.bg.data(), hd);
    kernels::matvec_t_acc(cell.wxi.data(), hd, in, dzi.data(),
                          dxs[idx].data());
    kernels::matvec_t_acc(cell.wxf.data(), hd, in, dzf.data(),
                          dxs[idx].data());
    kernels::matvec_t_acc(cell.wxo.data(), hd, in, dzo.data(),
                          dxs[idx].data());
    kernels::matvec_t_acc(cell.wxg.data(), hd, in, dzg.data(),
                          dxs[idx].data());
    std::fill(dh_acc.begin(), dh_acc.end(), 0.0);
    kernels::matvec_t_acc(cell.whi.data(), hd, hd, dzi.data(), dh_acc.data());
    kernels::matvec_t_acc(cell.whf.data(), hd, hd, dzf.data(), dh_acc.data());
    kernels::matvec_t_acc(cell.who.data(), hd, hd, dzo.data(), dh_acc.data());
    kernels::matvec_t_acc(cell.whg.data(), hd, hd, dzg.data(), dh_acc.data());
  }
}

void rnn_backward(const BLSTM& net, BLSTM& gnet, const RnnCache& cache,
                  const std::vector<Vec>& xs, const std::vector<Vec>& dout,
                  std::vector<Vec>& dxs) {
  const std::size_t t_count = xs.size();
  const std::size_t hd = static_cast<std::size_t>(net.fwd.hidden);
  std::vector<Vec> dhf(t_count, Vec(hd, 0.0));
  for (std::size_t t = 0; t < t_count; ++t)
    std::copy(dout[t].begin(), dout[t].begin() + hd, dhf[t].begin());
  dir_backward(net.fwd, gnet.fwd, xs, cache.fwd, dhf, false, dxs);
  if (cache.bidir) {
    std::vector<Vec> dhb(t_count, Vec(hd, 0.0));
    for (std::size_t t = 0; t < t_count; ++t)
      std::copy(dout[t].begin() + hd, dout[t].begin() + 2 * hd,
                dhb[t].begin());
    dir_backward(net.bwd, gnet.bwd, xs, cache.bwd, dhb, true, dxs);
  }
}

void scatter_encoder_grads(const FeatureEncoder& enc, FeatureEncoder& genc,
                           const EncodedUtt& e, const std::vector<Vec>& dx1,
                           const std::vector<Vec>& dx2) {
  const std::size_t t_count = dx1.size();
  for (std::size_t t = 0; t < t_count; ++t) {
    for (const CatUse& u : e.cat1[t])
      kernels::axpy(1.0, dx1[t].data() + u.offset,
                    &genc.tables[u.feature].at(u.row, 0), enc.emb_dim);
    for (const CatUse& u : e.cat2[t])
      kernels::axpy(1.0, dx2[t].data() + u.offset,
                    &genc.tables[u.feature].at(u.row, 0), enc.emb_dim);
    kernels::axpy(1.0, dx2[t].data() + e.word_offset,
                  &genc.word_table.at(e.word_rows[t], 0), enc.emb_dim);
  }
}

// Gradient of obj_weight * loss_with_delta for one utterance, accumulated
// into `grads`. Returns the utterance's Hz-domain loss.
double backward_utt(const NeuralModel& model, NeuralModel& grads,
                    const corpus::UtteranceRecord& utt,
                    contour::DeltaKind delta, double obj_weight) {
  ForwardCache fc;
  forward_all(model, utt, delta, fc);
  const std::size_t t_count = utt.syllables.size();
  const int pts = corpus::kContourPoints;
  const double cs = obj_weight / (static_cast<double>(t_count) * pts);

  double sq = 0.0;
  std::vector<Vec> dtot(t_count, Vec(pts, 0.0));
  for (std::size_t t = 0; t < t_count; ++t) {
    const Contour& y = utt.syllables[t].contour;
    for (int k = 0; k < pts; ++k) {
      double e = fc.bundle.total[t][k] - y[k];
      sq += e * e;
      dtot[t][k] += 2.0 * e * cs;
    }
  }
  if (delta != contour::DeltaKind::none) {
    std::vector<Vec> truth_bases(t_count);
    for (std::size_t t = 0; t < t_count; ++t)
      truth_bases[t].assign(utt.syllables[t].contour.begin(),
                            utt.syllables[t].contour.end());
    std::vector<Vec> td =
        contour::sequence_deltas(delta_spec(delta), truth_bases);
    if (delta == contour::DeltaKind::in_delta) {
      for (std::size_t t = 0; t < t_count; ++t) {
        for (int j = 0; j + 1 < pts; ++j) {
          double e = (fc.bundle.total[t][j + 1] - fc.bundle.total[t][j]) -
                     td[t][j];
          sq += e * e;
          dtot[t][j + 1] += 2.0 * e * cs;
          dtot[t][j] -= 2.0 * e * cs;
        }
      }
    } else {
      for (std::size_t t = 0; t < t_count; ++t) {
        if (t > 0) {
          for (int j = 0; j < pts; ++j) {
            double e = (fc.bundle.total[t][j] - fc.bundle.total[t - 1][j]) -
                       td[t][j];
            sq += e * e;
            dtot[t][j] += 2.0 * e * cs;
            dtot[t - 1][j] -= 2.0 * e * cs;
          }
        }
        if (t + 1 < t_count) {
          for (int j = 0; j < pts; ++j) {
            double e = (fc.bundle.total[t + 1][j] - fc.bundle.total[t][j]) -
                       td[t][pts + j];
            sq += e * e;
            dtot[t + 1][j] += 2.0 * e * cs;
            dtot[t][j] -= 2.0 * e * cs;
          }
        }
      }
    }
  }
  double loss_hz = sq / (static_cast<double>(t_count) * pts);
  require(std::isfinite(loss_hz), ErrorCode::numeric,
          "non-finite loss on utterance '", utt.id, "'");

  if (model.kind == NetKind::additive) {
    std::vector<Vec> dr1(t_count, Vec(2 * model.net1.fwd.hidden, 0.0));
    std::vector<Vec> dr2(t_count, Vec(2 * model.net2.fwd.hidden, 0.0));
    for (std::size_t t = 0; t < t_count; ++t) {
      Vec draw(pts);
      for (int k = 0; k < pts; ++k) draw[k] = kOutputGain * dtot[t][k];
      mlp_backward_step(model.mlp1, grads.mlp1, fc.rnn1.out[t], fc.mlp1[t],
                        draw, dr1[t]);
      mlp_backward_step(model.mlp2, grads.mlp2, fc.rnn2.out[t], fc.mlp2[t],
                        draw, dr2[t]);
    }
    std::vector<Vec> dx1(t_count, Vec(model.enc.seq1_dim(), 0.0));
    std::vector<Vec> dx2(t_count, Vec(model.enc.seq2_dim(), 0.0));
    rnn_backward(model.net1, grads.net1, fc.rnn1, fc.enc.x1, dr1, dx1);
    rnn_backward(model.net2, grads.net2, fc.rnn2, fc.enc.x2, dr2, dx2);
    scatter_encoder_grads(model.enc, grads.enc, fc.enc, dx1, dx2);
  } else {
    const int in_dim = model.enc.seq1_dim() + model.enc.seq2_dim();
    std::vector<Vec> dxin(t_count, Vec(in_dim, 0.0));
    if (model.kind == NetKind::mlp) {
      for (std::size_t t = 0; t < t_count; ++t) {
        Vec draw(pts);
        for (int k = 0; k < pts; ++k) draw[k] = kOutputGain * dtot[t][k];
        mlp_backward_step(model.mlp1, grads.mlp1, fc.xin[t], fc.mlp1[t], draw,
                          dxin[t]);
      }
    } else {
      const int rd = fc.rnn1.bidir ? 2 * model.net1.fwd.hidden
                                   : model.net1.fwd.hidden;
      std::vector<Vec> dr(t_count, Vec(rd, 0.0));
      for (std::size_t t = 0; t < t_count; ++t) {
        Vec draw(pts);
        for (int k = 0; k < pts; ++k) draw[k] = kOutputGain * dtot[t][k];
        mlp_backward_step(model.mlp1, grads.mlp1, fc.rnn1.out[t], fc.mlp1[t],
                          draw, dr[t]);
      }
      rnn_backward(model.net1, grads.net1, fc.rnn1, fc.xin, dr, dxin);
    }
    const int d1 = model.enc.seq1_dim();
    std::vector<Vec> dx1(t_count, Vec(d1, 0.0));
    std::vector<Vec> dx2(t_count, Vec(model.enc.seq2_dim(), 0.0));
    for (std::size_t t = 0; t < t_count; ++t) {
      std::copy(dxin[t].begin(), dxin[t].begin() + d1, dx1[t].begin());
      std::copy(dxin[t].begin() + d1, dxin[t].end(), dx2[t].begin());
    }
    scatter_encoder_grads(model.enc, grads.enc, fc.enc, dx1, dx2);
  }
  return loss_hz;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

void fill_uniform(std::mt19937_64& rng, double radius, double* data,
                  std::size_t n) {
  std::uniform_real_distribution<double> dist(-radius, radius);
  for (std::size_t i = 0; i < n; ++i) data[i] = dist(rng);
}

LSTMCell make_cell(int in, int hidden, std::mt19937_64& rng) {
  LSTMCell c;
  c.in = in;
  c.hidden = hidden;
  const double rx = 1.0 / std::sqrt(static_cast<double>(in));
  const double rh = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto mk = [&](Mat& wx, Mat& wh, Vec& b, double bias) {
    wx.init(hidden, in);
    wh.init(hidden, hidden);
    b.assign(hidden, bias);
    fill_uniform(rng, rx, wx.data(), wx.v.size());
    fill_uniform(rng, rh, wh.data(), wh.v.size());
  };
  mk(c.wxi, c.whi, c.bi, 0.0);
  mk(c.wxf, c.whf, c.bf, 1.0);  // open forget gates at start
  mk(c.wxo, c.who, c.bo, 0.0);
  mk(c.wxg, c.whg, c.bg, 0.0);
  return c;
}

LSTMCell zero_cell(int in, int hidden) {
  LSTMCell c;
  c.in = in;
  c.hidden = hidden;
  auto mk = [&](Mat& wx, Mat& wh, Vec& b) {
    wx.init(hidden, in);
    wh.init(hidden, hidden);
    b.assign(hidden, 0.0);
  };
  mk(c.wxi, c.whi, c.bi);
  mk(c.wxf, c.whf, c.bf);
  mk(c.wxo, c.who, c.bo);
  mk(c.wxg, c.whg, c.bg);
  return c;
}

std::vector<DenseLayer> zero_mlp(int in, int h1, int h2, Act hidden_act) {
  auto mk = [](int i, int o, Act a) {
    DenseLayer l;
    l.w.init(o, i);
    l.b.assign(o, 0.0);
    l.act = a;
    return l;
  };
  return {mk(in, h1, hidden_act), mk(h1, h2, hidden_act),
          mk(h2, corpus::kContourPoints, Act::identity)};
}

FeatureEncoder build_encoder_layout(const corpus::FeatureSchema& schema,
                                    int emb_dim, std::size_t vocab_size) {
  FeatureEncoder enc;
  enc.emb_dim = emb_dim;
  enc.tables.resize(schema.size());
  enc.num_mean.assign(schema.size(), 0.0);
  enc.num_std.assign(schema.size(), 1.0);
  for (std::size_t fi = 0; fi < schema.size(); ++fi) {
    const corpus::FeatureDef& def = schema.at(fi);
    if (in_seq1(def.level)) enc.seq1_features.push_back(static_cast<int>(fi));
    if (in_seq2(def.level)) enc.seq2_features.push_back(static_cast<int>(fi));
    if (def.is_categorical()) {
      enc.tables[fi].init(
          static_cast<int>(def.categorical().values.size()) + 1, emb_dim);
    }
  }
  enc.word_vocab.assign(vocab_size, 0);
  enc.word_table.init(static_cast<int>(vocab_size) + 1, emb_dim);
  return enc;
}

NeuralModel build_structure(NetKind kind, const corpus::FeatureSchema& schema,
                            std::vector<int> tones, int emb, int hidden,
                            int h1, int h2, std::size_t vocab_size) {
  NeuralModel m;
  m.kind = kind;
  m.schema = schema;
  m.tones = std::move(tones);
  m.enc = build_encoder_layout(schema, emb, vocab_size);
  const int d1 = m.enc.seq1_dim();
  const int d2 = m.enc.seq2_dim();
  switch (kind) {
    case NetKind::mlp:
      m.mlp1 = zero_mlp(d1 + d2, h1, h2, Act::relu);
      break;
    case NetKind::lstm:
      m.net1.fwd = zero_cell(d1 + d2, hidden);
      m.mlp1 = zero_mlp(hidden, h1, h2, Act::relu);
      break;
    case NetKind::blstm:
      m.net1.fwd = zero_cell(d1 + d2, hidden);
      m.net1.bwd = zero_cell(d1 + d2, hidden);
      m.mlp1 = zero_mlp(2 * hidden, h1, h2, Act::relu);
      break;
    case NetKind::additive:
      m.net1.fwd = zero_cell(d1, hidden);
      m.net1.bwd = zero_cell(d1, hidden);
      m.mlp1 = zero_mlp(2 * hidden, h1, h2, Act::relu);
      m.net2.fwd = zero_cell(d2, hidden);
      m.net2.bwd = zero_cell(d2, hidden);
      m.mlp2 = zero_mlp(2 * hidden, h1, h2, Act::tanh);
      break;
  }
  return m;
}

void fit_encoder_stats(FeatureEncoder& enc, const corpus::Corpus& corpus) {
  const corpus::FeatureSchema& schema = corpus.schema;
  std::vector<double> s1(schema.size(), 0.0), s2(schema.size(), 0.0);
  double n = 0.0;
  std::vector<int> vocab;
  for (const corpus::UtteranceRecord& utt : corpus.utterances) {
    for (const corpus::WordEntry& w : utt.words) vocab.push_back(w.surface_id);
    for (const corpus::SyllableRecord& syl : utt.syllables) {
      n += 1.0;
      for (std::size_t fi = 0; fi < schema.size(); ++fi) {
        if (schema.at(fi).is_categorical()) continue;
        double v = std::get<double>(syl.features[fi]);
        s1[fi] += v;
        s2[fi] += v * v;
      }
    }
  }
  require(n > 0.0, ErrorCode::invalid_config,
          "cannot fit feature statistics on an empty corpus");
  for (std::size_t fi = 0; fi < schema.size(); ++fi) {
    if (schema.at(fi).is_categorical()) continue;
    double mean = s1[fi] / n;
    double var = std::max(0.0, s2[fi] / n - mean * mean);
    enc.num_mean[fi] = mean;
    enc.num_std[fi] = std::max(std::sqrt(var), 1e-6);
  }
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  enc.word_vocab = vocab;
  enc.word_table.init(static_cast<int>(vocab.size()) + 1, enc.emb_dim);
}

void init_params(NeuralModel& m, const TrainConfig& config) {
  std::mt19937_64 rng(config.seed);
  const double emb_radius = 0.1;
  for (std::size_t fi = 0; fi < m.schema.size(); ++fi) {
    Mat& t = m.enc.tables[fi];
    if (t.rows > 0) fill_uniform(rng, emb_radius, t.data(), t.v.size());
  }
  fill_uniform(rng, emb_radius, m.enc.word_table.data(),
               m.enc.word_table.v.size());
  auto init_cell = [&](LSTMCell& c) {
    LSTMCell fresh = make_cell(c.in, c.hidden, rng);
    c = std::move(fresh);
  };
  auto init_mlp = [&](std::vector<DenseLayer>& mlp) {
    for (DenseLayer& l : mlp) {
      std::fill(l.b.begin(), l.b.end(), 0.0);
      fill_uniform(rng, 1.0 / std::sqrt(static_cast<double>(l.w.cols)),
                   l.w.data(), l.w.v.size());
    }
  };
  switch (m.kind) {
    case NetKind::mlp:
      init_mlp(m.mlp1);
      break;
    case NetKind::lstm:
      init_cell(m.net1.fwd);
      init_mlp(m.mlp1);
      break;
    case NetKind::blstm:
      init_cell(m.net1.fwd);
      init_cell(m.net1.bwd);
      init_mlp(m.mlp1);
      break;
    case NetKind::additive:
      init_cell(m.net1.fwd);
      init_cell(m.net1.bwd);
      init_mlp(m.mlp1);
      init_cell(m.net2.fwd);
      init_cell(m.net2.bwd);
      init_mlp(m.mlp2);
      break;
  }
}

NeuralModel zeros_like(const NeuralModel& model) {
  NeuralModel g = model;
  for (ParamRef& p : params(g)) std::fill(p.data, p.data + p.size, 0.0);
  return g;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamState {
  NeuralModel m, v;
  long long t = 0;
};

double grad_norm(NeuralModel& grads) {
  double s = 0.0;
  for (ParamRef& p : params(grads)) s += kernels::sumsq(p.data, p.size);
  return std::sqrt(s);
}

void clip_grads(NeuralModel& grads, double clip) {
  if (clip <= 0.0) return;
  double n = grad_norm(grads);
  if (n <= clip || n == 0.0) return;
  double scale = clip / n;
  for (ParamRef& p : params(grads))
    for (std::size_t i = 0; i < p.size; ++i) p.data[i] *= scale;
}

void adam_step(NeuralModel& model, NeuralModel& grads, AdamState& st,
               double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  st.t += 1;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  std::vector<ParamRef> pm = params(model);
  std::vector<ParamRef> pg = params(grads);
  std::vector<ParamRef> p1 = params(st.m);
  std::vector<ParamRef> p2 = params(st.v);
  for (std::size_t i = 0; i < pm.size(); ++i) {
    double* th = pm[i].data;
    const double* g = pg[i].data;
    double* m1 = p1[i].data;
    double* m2 = p2[i].data;
    for (std::size_t k = 0; k < pm[i].size; ++k) {
      m1[k] = b1 * m1[k] + (1.0 - b1) * g[k];
      m2[k] = b2 * m2[k] + (1.0 - b2) * g[k] * g[k];
      th[k] -= lr * (m1[k] / bc1) / (std::sqrt(m2[k] / bc2) + eps);
    }
  }
}

std::vector<double> snapshot(NeuralModel& model) {
  std::vector<double> flat;
  for (ParamRef& p : params(model)) flat.insert(flat.end(), p.data,
                                                p.data + p.size);
  return flat;
}

void restore(NeuralModel& model, const std::vector<double>& flat) {
  std::size_t off = 0;
  for (ParamRef& p : params(model)) {
    std::copy(flat.begin() + off, flat.begin() + off + p.size, p.data);
    off += p.size;
  }
}

std::string history_tail(const std::vector<EpochStats>& history) {
  std::ostringstream os;
  os << history.size() << " completed epochs";
  std::size_t from = history.size() > 3 ? history.size() - 3 : 0;
  for (std::size_t i = from; i < history.size(); ++i)
    os << "; epoch " << (i + 1) << " train "
       << textio::format_double(history[i].train_loss) << " val "
       << textio::format_double(history[i].val_loss);
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Public surface
// ---------------------------------------------------------------------------

const char* net_name(NetKind kind) {
  switch (kind) {
    case NetKind::mlp:
      return "mlp";
    case NetKind::lstm:
      return "lstm";
    case NetKind::blstm:
      return "blstm";
    case NetKind::additive:
      return "additive";
  }
  return "?";
}

NetKind net_from_name(const std::string& name) {
  if (name == "mlp") return NetKind::mlp;
  if (name == "lstm") return NetKind::lstm;
  if (name == "blstm") return NetKind::blstm;
  if (name == "additive") return NetKind::additive;
  raise(ErrorCode::invalid_config, "unknown network kind '", name,
        "' (expected mlp, lstm, blstm or additive)");
}

int FeatureEncoder::seq1_dim() const {
  int d = 0;
  for (int fi : seq1_features)
    d += tables[fi].rows > 0 ? emb_dim : 1;
  return d;
}

int FeatureEncoder::seq2_dim() const {
  int d = 0;
  for (int fi : seq2_features)
    d += tables[fi].rows > 0 ? emb_dim : 1;
  return d + emb_dim;  // word-identity embedding
}

int FeatureEncoder::word_slot(int surface_id) const {
  auto it = std::lower_bound(word_vocab.begin(), word_vocab.end(), surface_id);
  if (it != word_vocab.end() && *it == surface_id)
    return static_cast<int>(it - word_vocab.begin());
  return static_cast<int>(word_vocab.size());  // unknown slot
}

void TrainConfig::validate() const {
  require(std::isfinite(learning_rate) && learning_rate >= 0.0,
          ErrorCode::invalid_config, "learning rate must be >= 0, got ",
          learning_rate);
  require(epochs >= 0, ErrorCode::invalid_config,
          "epoch count must be >= 0, got ", epochs);
  require(std::isfinite(clip_norm) && clip_norm >= 0.0,
          ErrorCode::invalid_config, "clip norm must be >= 0, got ",
          clip_norm);
  require(patience >= 1, ErrorCode::invalid_config,
          "patience must be >= 1, got ", patience);
  require(blstm_hidden >= 1, ErrorCode::invalid_config,
          "hidden size must be >= 1, got ", blstm_hidden);
  require(mlp_hidden1 >= 1 && mlp_hidden2 >= 1, ErrorCode::invalid_config,
          "mlp hidden sizes must be >= 1, got ", mlp_hidden1, " and ",
          mlp_hidden2);
  require(emb_dim >= 1, ErrorCode::invalid_config,
          "embedding dimension must be >= 1, got ", emb_dim);
}

std::vector<ParamRef> params(NeuralModel& model) {
  std::vector<ParamRef> out;
  auto add_mat = [&](const std::string& name, Mat& m) {
    if (!m.v.empty()) out.push_back({name, m.data(), m.v.size()});
  };
  auto add_vec = [&](const std::string& name, Vec& v) {
    if (!v.empty()) out.push_back({name, v.data(), v.size()});
  };
  for (std::size_t fi = 0; fi < model.schema.size(); ++fi)
    add_mat("enc." + model.schema.at(fi).name, model.enc.tables[fi]);
  add_mat("enc.word", model.enc.word_table);
  auto add_cell = [&](const std::string& prefix, LSTMCell& c) {
    add_mat(prefix + ".wxi", c.wxi);
    add_mat(prefix + ".whi", c.whi);
    add_vec(prefix + ".bi", c.bi);
    add_mat(prefix + ".wxf", c.wxf);
    add_mat(prefix + ".whf", c.whf);
    add_vec(prefix + ".bf", c.bf);
    add_mat(prefix + ".wxo", c.wxo);
    add_mat(prefix + ".who", c.who);
    add_vec(prefix + ".bo", c.bo);
    add_mat(prefix + ".wxg", c.wxg);
    add_mat(prefix + ".whg", c.whg);
    add_vec(prefix + ".bg", c.bg);
  };
  auto add_mlp = [&](const std::string& prefix,
                     std::vector<DenseLayer>& mlp) {
    for (std::size_t l = 0; l < mlp.size(); ++l) {
      add_mat(prefix + "." + std::to_string(l) + ".w", mlp[l].w);
      add_vec(prefix + "." + std::to_string(l) + ".b", mlp[l].b);
    }
  };
  switch (model.kind) {
    case NetKind::mlp:
      add_mlp("mlp1", model.mlp1);
      break;
    case NetKind::lstm:
      add_cell("net1.fwd", model.net1.fwd);
      add_mlp("mlp1", model.mlp1);
      break;
    case NetKind::blstm:
      add_cell("net1.fwd", model.net1.fwd);
      add_cell("net1.bwd", model.net1.bwd);
      add_mlp("mlp1", model.mlp1);
      break;
    case NetKind::additive:
      add_cell("net1.fwd", model.net1.fwd);
      add_cell("net1.bwd", model.net1.bwd);
      add_mlp("mlp1", model.mlp1);
      add_cell("net2.fwd", model.net2.fwd);
      add_cell("net2.bwd", model.net2.bwd);
      add_mlp("mlp2", model.mlp2);
      break;
  }
  return out;
}

std::pair<std::vector<Vec>, std::vector<Vec>> encode_features(
    const FeatureEncoder& enc, const corpus::FeatureSchema& schema,
    const corpus::UtteranceRecord& utt) {
  EncodedUtt e = encode_utt(enc, schema, utt);
  return {std::move(e.x1), std::move(e.x2)};
}

std::pair<Vec, Vec> lstm_step(const LSTMCell& cell, const Vec& x,
                              const Vec& h_prev, const Vec& c_prev) {
  require(static_cast<int>(x.size()) == cell.in, ErrorCode::mismatch,
          "lstm step: input has ", x.size(), " values, cell expects ",
          cell.in);
  require(static_cast<int>(h_prev.size()) == cell.hidden &&
              static_cast<int>(c_prev.size()) == cell.hidden,
          ErrorCode::mismatch, "lstm step: state has ", h_prev.size(), "/",
          c_prev.size(), " values, cell expects ", cell.hidden);
  StepCache sc;
  Vec h;
  gates_forward(cell, x, h_prev, c_prev, sc, h);
  return {std::move(h), std::move(sc.c)};
}

std::vector<Vec> blstm_forward(const BLSTM& net, const std::vector<Vec>& seq) {
  require(!seq.empty(), ErrorCode::mismatch,
          "blstm forward: empty input sequence");
  for (const Vec& x : seq)
    require(static_cast<int>(x.size()) == net.fwd.in, ErrorCode::mismatch,
            "blstm forward: input has ", x.size(), " values, cell expects ",
            net.fwd.in);
  RnnCache cache;
  rnn_forward(net, true, seq, cache);
  return std::move(cache.out);
}

PredictionBundle additive_forward(const NeuralModel& model,
                                  const corpus::UtteranceRecord& utt,
                                  contour::DeltaKind delta) {
  ForwardCache fc;
  forward_all(model, utt, delta, fc);
  return std::move(fc.bundle);
}

double loss_with_delta(const PredictionBundle& pred,
                       const corpus::UtteranceRecord& truth,
                       contour::DeltaKind delta) {
  const std::size_t t_count = truth.syllables.size();
  require(t_count > 0, ErrorCode::mismatch, "utterance '", truth.id,
          "': no syllables to score");
  require(pred.total.size() == t_count, ErrorCode::mismatch, "utterance '",
          truth.id, "': prediction has ", pred.total.size(),
          " syllables, truth has ", t_count);
  const int pts = corpus::kContourPoints;
  double sq = 0.0;
  for (std::size_t t = 0; t < t_count; ++t)
    sq += kernels::sq_diff_sum(pred.total[t].data(),
                               truth.syllables[t].contour.data(), pts);
  if (delta != contour::DeltaKind::none) {
    require(pred.delta.size() == t_count, ErrorCode::mismatch, "utterance '",
            truth.id, "': prediction carries ", pred.delta.size(),
            " delta blocks, expected ", t_count);
    std::vector<Vec> truth_bases(t_count);
    for (std::size_t t = 0; t < t_count; ++t)
      truth_bases[t].assign(truth.syllables[t].contour.begin(),
                            truth.syllables[t].contour.end());
    std::vector<Vec> td =
        contour::sequence_deltas(delta_spec(delta), truth_bases);
    for (std::size_t t = 0; t < t_count; ++t) {
      require(pred.delta[t].size() == td[t].size(), ErrorCode::mismatch,
              "utterance '", truth.id, "': delta block ", t, " has ",
              pred.delta[t].size(), " values, expected ", td[t].size());
      sq += kernels::sq_diff_sum(pred.delta[t].data(), td[t].data(),
                                 td[t].size());
    }
  }
  return sq / (static_cast<double>(t_count) * pts);
}

GradientSet compute_gradients(
    const NeuralModel& model,
    const std::vector<const corpus::UtteranceRecord*>& utterances,
    const TrainConfig& config) {
  require(!utterances.empty(), ErrorCode::invalid_config,
          "gradient computation needs at least one utterance");
  GradientSet gs;
  gs.grads = zeros_like(model);
  const double w = 1.0 / static_cast<double>(utterances.size());
  double loss_sum = 0.0;
  for (const corpus::UtteranceRecord* utt : utterances)
    loss_sum += backward_utt(model, gs.grads, *utt, config.delta,
                             w * kTargetScale * kTargetScale);
  gs.loss_hz = loss_sum * w;
  gs.objective = gs.loss_hz * kTargetScale * kTargetScale;
  require(std::isfinite(gs.objective), ErrorCode::numeric,
          "non-finite training objective");
  return gs;
}

NeuralModel make_additive(const corpus::Corpus& train,
                          const TrainConfig& config) {
  config.validate();
  require(!train.utterances.empty(), ErrorCode::invalid_config,
          "cannot build a model from an empty corpus");
  NeuralModel m = build_structure(NetKind::additive, train.schema,
                                  train.tone_inventory, config.emb_dim,
                                  config.blstm_hidden, config.mlp_hidden1,
                                  config.mlp_hidden2, 0);
  fit_encoder_stats(m.enc, train);
  init_params(m, config);
  return m;
}

NeuralModel make_baseline(NetKind kind, const corpus::Corpus& train,
                          const TrainConfig& config) {
  require(kind != NetKind::additive, ErrorCode::invalid_config,
          "the additive model has its own constructor");
  config.validate();
  require(!train.utterances.empty(), ErrorCode::invalid_config,
          "cannot build a model from an empty corpus");
  NeuralModel m = build_structure(kind, train.schema, train.tone_inventory,
                                  config.emb_dim, config.blstm_hidden,
                                  config.mlp_hidden1, config.mlp_hidden2, 0);
  fit_encoder_stats(m.enc, train);
  init_params(m, config);
  return m;
}

TrainResult train(NeuralModel& model, const corpus::Corpus& train,
                  const corpus::Corpus& val, const TrainConfig& config) {
  config.validate();
  require(!train.utterances.empty(), ErrorCode::invalid_config,
          "training corpus is empty");
  require(model.schema == train.schema, ErrorCode::mismatch,
          "training corpus schema differs from the model schema");
  if (!val.utterances.empty())
    require(model.schema == val.schema, ErrorCode::mismatch,
            "validation corpus schema differs from the model schema");

  const std::size_t n = train.utterances.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(config.seed);

  NeuralModel grads = zeros_like(model);
  AdamState adam{zeros_like(model), zeros_like(model), 0};
  TrainResult result;
  std::vector<double> best = snapshot(model);
  double best_val = std::numeric_limits<double>::infinity();
  const double step_weight = kTargetScale * kTargetScale;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t i : order) {
      for (ParamRef& p : params(grads)) std::fill(p.data, p.data + p.size,
                                                  0.0);
      double loss_hz;
      try {
        loss_hz = backward_utt(model, grads, train.utterances[i],
                               config.delta, step_weight);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::numeric)
          raise(ErrorCode::numeric, "training diverged at epoch ", epoch,
                " (", history_tail(result.history), "): ", e.what());
        throw;
      }
      loss_sum += loss_hz;
      clip_grads(grads, config.clip_norm);
      adam_step(model, grads, adam, config.learning_rate);
    }
    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(n);

    if (val.utterances.empty()) {
      stats.val_loss = stats.train_loss;
    } else {
      double vs = 0.0;
      for (const corpus::UtteranceRecord& utt : val.utterances)
        vs += loss_with_delta(additive_forward(model, utt, config.delta), utt,
                              config.delta);
      stats.val_loss = vs / static_cast<double>(val.utterances.size());
    }
    require(std::isfinite(stats.train_loss) && std::isfinite(stats.val_loss),
            ErrorCode::numeric, "training diverged at epoch ", epoch, " (",
            history_tail(result.history), ")");
    result.history.push_back(stats);

    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      result.best_epoch = epoch;
      best = snapshot(model);
    } else if (epoch - result.best_epoch >= config.patience) {
      break;
    }
  }
  if (result.best_epoch > 0) restore(model, best);
  return result;
}

std::vector<Contour> predict_neural(const NeuralModel& model,
                                    const corpus::UtteranceRecord& utt) {
  return additive_forward(model, utt, contour::DeltaKind::none).total;
}

void save_neural(const NeuralModel& model, const std::string& path) {
  std::ofstream out = textio::open_output(path);
  out << "F0LAB-NN v1\n";
  out << "kind " << net_name(model.kind) << "\n";
  corpus::write_schema_block(model.schema, model.tones, out);
  int hidden = model.net1.fwd.hidden > 0 ? model.net1.fwd.hidden : 1;
  out << "dims " << model.enc.emb_dim << " " << hidden << " "
      << model.mlp1[0].w.rows << " " << model.mlp1[1].w.rows << "\n";
  std::size_t numeric_count = 0;
  for (std::size_t fi = 0; fi < model.schema.size(); ++fi)
    if (!model.schema.at(fi).is_categorical()) ++numeric_count;
  out << "numstats " << numeric_count;
  for (std::size_t fi = 0; fi < model.schema.size(); ++fi) {
    if (model.schema.at(fi).is_categorical()) continue;
    out << " " << textio::format_double(model.enc.num_mean[fi]) << " "
        << textio::format_double(model.enc.num_std[fi]);
  }
  out << "\n";
  out << "vocab " << model.enc.word_vocab.size();
  for (int id : model.enc.word_vocab) out << " " << id;
  out << "\n";
  NeuralModel& mut = const_cast<NeuralModel&>(model);
  std::vector<ParamRef> ps = params(mut);
  out << "params " << ps.size() << "\n";
  for (const ParamRef& p : ps) {
    out << "tensor " << p.name << " " << p.size;
    for (std::size_t i = 0; i < p.size; ++i)
      out << " " << textio::format_double(p.data[i]);
    out << "\n";
  }
  out << "end\n";
  require(out.good(), ErrorCode::io, "failed writing model to ", path);
}

NeuralModel load_neural(const std::string& path) {
  std::ifstream in = textio::open_input(path);
  textio::Reader r(in, path);
  r.expect_header("F0LAB-NN", "v1");
  r.expect("kind");
  NetKind kind = net_from_name(r.next_word("network kind"));
  auto [schema, tones] = corpus::read_schema_block(r);
  r.expect("dims");
  int emb = static_cast<int>(r.next_int("embedding dimension"));
  int hidden = static_cast<int>(r.next_int("hidden size"));
  int h1 = static_cast<int>(r.next_int("mlp hidden 1"));
  int h2 = static_cast<int>(r.next_int("mlp hidden 2"));
  if (emb < 1 || hidden < 1 || h1 < 1 || h2 < 1)
    r.fail("invalid model dimensions");
  r.expect("numstats");
  long long numeric_count = r.next_int("numeric feature count");
  std::vector<double> means, stds;
  for (long long i = 0; i < numeric_count; ++i) {
    means.push_back(r.next_double("feature mean"));
    stds.push_back(r.next_double("feature std"));
  }
  r.expect("vocab");
  long long vocab_size = r.next_int("vocabulary size");
  if (vocab_size < 0) r.fail("negative vocabulary size");
  std::vector<int> vocab;
  for (long long i = 0; i < vocab_size; ++i)
    vocab.push_back(static_cast<int>(r.next_int("word id")));

  NeuralModel m = build_structure(kind, schema, tones, emb, hidden, h1, h2,
                                  static_cast<std::size_t>(vocab_size));
  m.enc.word_vocab = vocab;
  std::size_t ni = 0;
  for (std::size_t fi = 0; fi < schema.size(); ++fi) {
    if (schema.at(fi).is_categorical()) continue;
    if (ni >= means.size())
      r.fail("numeric statistics count does not match the schema");
    m.enc.num_mean[fi] = means[ni];
    m.enc.num_std[fi] = stds[ni];
    ++ni;
  }
  if (ni != means.size())
    r.fail("numeric statistics count does not match the schema");

  std::vector<ParamRef> ps = params(m);
  r.expect("params");
  long long n_tensors = r.next_int("tensor count");
  if (n_tensors != static_cast<long long>(ps.size()))
    r.fail_at(ErrorCode::mismatch, "model lists ", n_tensors,
              " tensors, structure expects ", ps.size());
  for (ParamRef& p : ps) {
    r.expect("tensor");
    std::string name = r.next_word("tensor name");
    if (name != p.name)
      r.fail_at(ErrorCode::mismatch, "expected tensor '", p.name, "', got '",
                name, "'");
    long long size = r.next_int("tensor size");
    if (size != static_cast<long long>(p.size))
      r.fail_at(ErrorCode::mismatch, "tensor '", name, "' has ", size,
                " values, structure expects ", p.size);
    for (std::size_t i = 0; i < p.size; ++i)
      p.data[i] = r.next_double("tensor value");
  }
  r.expect("end");
  return m;
}

}  // namespace f0lab::neural
