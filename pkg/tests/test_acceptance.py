"""
End-to-end numeric checks: bit accounting at the base configuration, kernel
and quantizer properties over many random instances, and desk-scale
retraining on the synthetic copy task.
"""

import copy

import numpy as np
import pytest
import torch

from bcq.greedy import dequantize, greedy_quantize_vector, quantization_error, quantize_matrix, quantize_rows
from cli.bench import run_bench
from container.format import HEADER, read_metadata, write_checkpoint
from container.tensors import DenseTensor
from kernel.gemv import gemv_direct, memory_footprint
from kernel.lut import gemv_lut
from planner.accounting import model_size, sublayer_average_bits
from planner.clusters import average_bits_embedding, cluster_embedding
from planner.groups import BASE_DIMS, ParameterGroup
from planner.plan import PrecisionPlan
from planner.presets import get_template
from toynmt.config import ToyModelConfig, TrainSchedule
from toynmt.model import ToyTransformer
from toynmt.quantized import project_weights
from toynmt.retrain import evaluate, pnr_retrain, train_dense
from toynmt.sensitivity import DEFAULT_WIDTHS, sensitivity_sweep
from toynmt.tasks import CopyTask

SEEDS = (0, 1, 2)
TOY = ToyModelConfig(d_model=32, d_ffn=64, n_layers_enc=1, n_layers_dec=1, n_heads=4, vocab_size=32)


def _mixed_plan() -> PrecisionPlan:
    return get_template("emb-2.5-dec-1.8-enc-3.7").build(BASE_DIMS)


class TestBitAccounting:
    @pytest.mark.parametrize(
        "r, expected, tol",
        [(1, 2.5, 0.0), (2, 1.733, 0.001), (4, 1.318, 0.001), (8, 1.142, 0.001)],
    )
    def test_embedding_average_bits(self, r, expected, tol):
        bits = average_bits_embedding(cluster_embedding(32768, 4, r))
        assert abs(bits - expected) <= tol

    def test_block_averages(self):
        plan = _mixed_plan()
        assert sublayer_average_bits(plan, "decoder") == pytest.approx(1.75)
        assert sublayer_average_bits(plan, "encoder") == pytest.approx(11 / 3)
        assert sublayer_average_bits(plan, "embedding") == pytest.approx(2.5)

    def test_whole_model_average(self):
        assert model_size(_mixed_plan()).whole_model_avg_bits == pytest.approx(2.6, abs=0.05)

    def test_one_bit_coverage(self):
        spec = cluster_embedding(32768, 4, 8)
        assert spec.sizes[-1] / 32768 == pytest.approx(0.875, abs=0.001)

    def test_compression_ratio(self):
        size = model_size(_mixed_plan())
        assert size.ratio == pytest.approx(11.8, rel=0.05)
        assert size.dense_bytes == 4 * 60_915_712


class TestKernelEquivalence:
    def test_random_instances(self):
        rng = np.random.default_rng(2024)
        checked = 0
        for _ in range(1000):
            # log-uniform sizes keep most instances small while reaching 512 x 2048
            rows = int(np.exp(rng.uniform(0, np.log(512))))
            cols = int(np.exp(rng.uniform(0, np.log(2048))))
            q = int(rng.integers(1, 5))
            mu = int(rng.choice([1, 4, 8]))

            w = DenseTensor("w", rows, cols, rng.standard_normal((rows, cols)))
            t = quantize_matrix(w, [(rows, q)])
            x = rng.standard_normal(cols) / np.sqrt(cols)
            reference = dequantize(t).data.astype(np.float64) @ x.astype(np.float32).astype(np.float64)
            bound = 1e-5 * (1 + np.abs(reference))

            assert np.all(np.abs(gemv_direct(t, x) - reference) <= bound)
            assert np.all(np.abs(gemv_lut(t, x, mu=mu) - reference) <= bound)
            checked += 1
        assert checked == 1000

    def test_largest_shape(self):
        rng = np.random.default_rng(7)
        w = DenseTensor("w", 512, 2048, rng.standard_normal((512, 2048)))
        t = quantize_matrix(w, [(512, 4)])
        x = rng.standard_normal(2048) / np.sqrt(2048)
        reference = dequantize(t).data.astype(np.float64) @ x.astype(np.float32).astype(np.float64)
        for y in (gemv_direct(t, x), gemv_lut(t, x, mu=8), gemv_lut(t, x, mu=4)):
            assert np.all(np.abs(y - reference) <= 1e-5 * (1 + np.abs(reference)))


class TestGreedyProperties:
    def test_residual_norms_never_grow(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            w = rng.standard_normal(int(rng.integers(1, 300))) * rng.uniform(0.01, 10)
            row = greedy_quantize_vector(w, 8)
            residual = w.astype(np.float32).astype(np.float64)
            norm = np.linalg.norm(residual)
            for plane in range(8):
                residual = residual - float(row.scales[plane]) * row.code(plane)
                next_norm = np.linalg.norm(residual)
                assert next_norm <= norm * (1 + 1e-6) + 1e-12
                norm = next_norm

    def test_scales_non_increasing_on_gaussian_rows(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            w = rng.standard_normal(int(rng.integers(64, 1025)))
            scales = greedy_quantize_vector(w, 4).scales
            assert all(b <= a for a, b in zip(scales, scales[1:]))

    def test_error_non_increasing_in_q(self):
        rng = np.random.default_rng(13)
        for _ in range(1000):
            w = DenseTensor("w", 1, 48, rng.standard_normal((1, 48)))
            errors = [quantization_error(w, quantize_matrix(w, [(1, q)])) for q in (1, 2, 3, 4)]
            slack = 1e-6 * float(np.linalg.norm(w.data))
            assert all(b <= a + slack for a, b in zip(errors, errors[1:]))

    def test_worked_example(self):
        row = greedy_quantize_vector([3, 1, -2, 0.5], 2)
        assert row.scales.tolist() == [1.625, 0.875]
        assert row.reconstruct().tolist() == [2.5, 0.75, -2.5, 0.75]


class TestMemoryAccounting:
    def test_footprint_closed_form(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            rows, cols = int(rng.integers(1, 80)), int(rng.integers(1, 400))
            row_bits = rng.integers(1, 9, size=rows)
            t = quantize_rows(DenseTensor("w", rows, cols, rng.standard_normal((rows, cols))), row_bits)
            assert memory_footprint(t) == int(row_bits.sum()) * (4 * -(-cols // 32) + 4)

    def test_file_size_is_header_plus_payloads(self, tmp_path):
        rng = np.random.default_rng(15)
        for trial in range(20):
            rows, cols = int(rng.integers(1, 40)), int(rng.integers(1, 100))
            dense = DenseTensor("d", rows, cols, rng.standard_normal((rows, cols)))
            packed = quantize_rows(
                DenseTensor("q", rows, cols, rng.standard_normal((rows, cols))),
                rng.integers(1, 5, size=rows),
            )
            path = tmp_path / f"{trial}.bcq"
            written = write_checkpoint([dense, packed], path)

            raw = path.read_bytes()
            metadata, payload_start = read_metadata(raw)
            lengths = sum(entry.length for entry in metadata.tensors)
            assert lengths == dense.nbytes + memory_footprint(packed)
            assert len(raw) == written == payload_start + lengths
            assert payload_start > HEADER.size


class TestBenchmarkMemory:
    @pytest.mark.parametrize("q, expected", [(1, 34816), (2, 69632)])
    def test_packed_weights_ten_times_smaller(self, q, expected):
        reports = {report.kernel: report for report in run_bench(512, 512, q, iters=3)}
        assert reports["direct"].bytes_touched == expected
        assert reports["dense"].bytes_touched >= 10 * expected
        # speedup is reported, not gated
        assert reports["lut"].speedup > 0


def _train_toy(seed: int) -> tuple[ToyTransformer, CopyTask]:
    torch.manual_seed(seed)
    model = ToyTransformer(TOY)
    task = CopyTask(TOY.vocab_size, seq_len=6, noise=0.1)
    train_dense(model, task, TrainSchedule(total_steps=600, d_model=TOY.d_model, batch_size=32), seed=seed)
    return model, task


@pytest.fixture(scope="module")
def dense_toys() -> list[tuple[ToyTransformer, CopyTask]]:
    return [_train_toy(seed) for seed in SEEDS]


@pytest.mark.slow
class TestRetrainingRecovery:
    @pytest.mark.parametrize("index", range(len(SEEDS)))
    def test_two_bit_retraining(self, dense_toys, index):
        dense, task = dense_toys[index]
        eval_batch = task.eval_batch(512, seed=100 + index)
        plan = PrecisionPlan.uniform(TOY.dims, 2)
        dense_loss = evaluate(dense, eval_batch)

        quantize_only = copy.deepcopy(dense)
        project_weights(quantize_only, plan)
        baseline_loss = evaluate(quantize_only, eval_batch)

        retrained = copy.deepcopy(dense)
        schedule = TrainSchedule(pnr=50, total_steps=400, d_model=TOY.d_model, batch_size=32)
        pnr_retrain(retrained, plan, schedule, task, seed=SEEDS[index], final_projection=True)
        retrained_loss = evaluate(retrained, eval_batch)

        assert retrained_loss < baseline_loss
        assert retrained_loss <= 1.5 * dense_loss


@pytest.mark.slow
class TestSensitivitySweep:
    def test_degradation_falls_with_bits(self, dense_toys):
        per_group: dict[ParameterGroup, dict[int, list[float]]] = {
            group: {bits: [] for bits in DEFAULT_WIDTHS} for group in ParameterGroup
        }
        for index, (dense, task) in enumerate(dense_toys):
            model = copy.deepcopy(dense)
            table = sensitivity_sweep(model, task.eval_batch(512, seed=200 + index))
            assert len(table.rows) == 24
            for row in table.rows:
                per_group[row.group][row.bits].append(row.degradation)

        for group, by_bits in per_group.items():
            mean = {bits: float(np.mean(values)) for bits, values in by_bits.items()}
            assert mean[1] > mean[4], group
            curve = [mean[bits] for bits in DEFAULT_WIDTHS]
            # intermediate widths may wobble by evaluation noise
            assert all(b <= a + 0.02 for a, b in zip(curve, curve[1:])), group
