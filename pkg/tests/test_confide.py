from adapters.dataset_adapter import DatasetAdapter
from adapters.families.burgers import BurgersFamily
from adapters.families.constant_coeff import ConstantCoeffFamily
from adapters.families.fitzhugh_nagumo import FitzHughNagumoFamily
from adapters.families.signal import Patch, extract_patch, stack_patches
from autodiff.optim import Adam
from autodiff.tensor import grad
from interfaces.errors import ConfigError, DatasetError, FamilyError, ShapeError, UnstableRolloutError
from models.confide import ConfideModel, encode, estimate, freeze_heads, infer, reconstruct, rollout_steps
from models.confide0 import Confide0Model, infer_confide0
from models.manifest import load_model, model_from_bytes, model_to_bytes, save_model
import numpy as np
import pytest
from solvers.explicit import solve_explicit

N_CTX = 4


@pytest.fixture
def constant_model(grid_1d, tiny_network):
    return ConfideModel(ConstantCoeffFamily(), grid_1d, N_CTX, tiny_network, seed=3)


@pytest.fixture
def test_signal(constant_dataset):
    ds = DatasetAdapter(constant_dataset)
    return ds.signal(ds.manifest.splits["test"][0])


def pin_scalars(model: ConfideModel, values) -> None:
    """Makes the scalar estimator output `values` for every latent."""
    weight, bias = model.estimator.scalar_mlp.params[-2:]
    weight.data[...] = 0.0
    bias.data[...] = np.asarray(values, dtype=np.float64)


@pytest.mark.parametrize("variant", ["confide", "ae-ic", "no-ae"])
def test_losses_are_finite_with_gradients(variant, grid_1d, tiny_network, test_signal):
    model = ConfideModel(ConstantCoeffFamily(), grid_1d, N_CTX, tiny_network, variant=variant)
    fields = np.asarray(test_signal.fields[None, :, :N_CTX], dtype=np.float64)
    parts = model.losses(fields, alpha=0.0 if variant == "no-ae" else 0.5)
    values = parts.values()
    assert all(np.isfinite(v) for v in values.values())
    assert (parts.ae is None) == (variant == "no-ae")
    grads = grad(parts.total, model.parameters())
    assert len(grads) == len(model.parameters())
    assert all(g.shape == p.data.shape for g, p in zip(grads, model.parameters()))
    assert any(np.abs(g).sum() > 0 for g in grads)


def test_alpha_extremes_select_one_term(constant_model, test_signal):
    fields = np.asarray(test_signal.fields[None, :, :N_CTX], dtype=np.float64)
    only_ae = constant_model.losses(fields, alpha=1.0)
    only_coef = constant_model.losses(fields, alpha=0.0)
    assert only_ae.total.item() == pytest.approx(only_ae.ae.item())
    assert only_coef.total.item() == pytest.approx(only_coef.coef.item())


def test_encode_reconstruct_and_estimate_shapes(constant_model, test_signal, tiny_network):
    patch = extract_patch(test_signal, N_CTX)
    z = encode(constant_model, patch)
    assert z.shape == (tiny_network.d_z,)
    batch = stack_patches([patch, extract_patch(test_signal, N_CTX, 2)])
    assert encode(constant_model, batch).shape == (2, tiny_network.d_z)
    recon, loss_ae = reconstruct(constant_model, patch)
    assert recon.shape == patch.fields.shape
    assert loss_ae >= 0.0
    est = estimate(constant_model, patch)
    assert est.family_id == "constant"
    assert set(est.scalars) == {"a", "b", "c"}
    assert all(isinstance(v, float) for v in est.scalars.values())


def test_no_ae_variant_cannot_reconstruct(grid_1d, tiny_network, test_signal):
    model = ConfideModel(ConstantCoeffFamily(), grid_1d, N_CTX, tiny_network, variant="no-ae")
    assert model.decoder is None
    with pytest.raises(ConfigError):
        reconstruct(model, extract_patch(test_signal, N_CTX))


def test_infer_with_pinned_estimator_matches_solver(constant_model, test_signal):
    pin_scalars(constant_model, [1.0, 0.0, 0.0])
    patch = extract_patch(test_signal, N_CTX)
    result = infer(constant_model, patch)
    assert result.estimate.scalars == {"a": 1.0, "b": 0.0, "c": 0.0}
    steps = rollout_steps(constant_model, patch)
    assert steps == 20 - (N_CTX - 1)
    assert result.prediction.n_slices == steps + 1
    family = constant_model.family
    init = patch.last_slice.astype(np.float64)
    expected = solve_explicit(family, family.true_estimate(result.estimate.scalars), init, constant_model.grid, steps)
    np.testing.assert_array_equal(result.prediction.fields, expected.fields)
    np.testing.assert_array_equal(result.prediction.fields[:, 0], patch.last_slice)


def test_infer_is_deterministic_and_leaves_model_unchanged(constant_model, test_signal):
    pin_scalars(constant_model, [0.5, 0.1, -0.2])
    before = model_to_bytes(constant_model)
    patch = extract_patch(test_signal, N_CTX)
    first = infer(constant_model, patch, n_steps=5)
    second = infer(constant_model, patch, n_steps=5)
    np.testing.assert_array_equal(first.prediction.fields, second.prediction.fields)
    assert model_to_bytes(constant_model) == before


def test_estimate_rejects_batches_and_wrong_shapes(constant_model, test_signal, grid_2d):
    patch = extract_patch(test_signal, N_CTX)
    with pytest.raises(ShapeError):
        estimate(constant_model, stack_patches([patch, patch]))
    with pytest.raises(ShapeError):
        encode(constant_model, extract_patch(test_signal, N_CTX + 1))
    with pytest.raises(FamilyError):
        encode(constant_model, Patch(grid_2d, np.zeros((2, N_CTX, 8, 8))))


def test_burgers_estimate_has_a_state_head(grid_1d, tiny_network, burgers_dataset):
    model = ConfideModel(BurgersFamily(), grid_1d, N_CTX, tiny_network)
    signal = DatasetAdapter(burgers_dataset).signal(0)
    est = estimate(model, extract_patch(signal, N_CTX))
    assert set(est.scalars) == {"a"}
    values = est.head("b")(np.linspace(-1, 1, 9))
    assert values.shape == (9,)
    assert np.all(np.isfinite(values))


def test_fitzhugh_nagumo_model_losses(grid_2d, tiny_network, rng):
    model = ConfideModel(FitzHughNagumoFamily(), grid_2d, 3, tiny_network)
    fields = 0.3 * rng.standard_normal((2, 2, 3, 8, 8))
    parts = model.losses(fields, alpha=0.5)
    assert np.isfinite(parts.total.item())
    recon, _ = reconstruct(model, Patch(grid_2d, fields))
    assert recon.shape == fields.shape
    est = estimate(model, Patch(grid_2d, fields[0]))
    assert set(est.scalars) == {"k"}
    assert est.head("R_v")(fields[0, 0, 0], fields[0, 1, 0]).shape == (8, 8)


def test_confide0_losses_and_frozen_rollout(grid_1d, tiny_network, test_signal):
    model = Confide0Model(ConstantCoeffFamily(), grid_1d, N_CTX, tiny_network)
    fields = np.asarray(test_signal.fields[None, :, :N_CTX], dtype=np.float64)
    parts = model.losses(fields, alpha=0.5)
    assert np.isfinite(parts.total.item())
    assert np.isfinite(parts.ae.item())

    weight, bias = model.derivative.params[-2:]
    weight.data[...] = 0.0
    bias.data[...] = 0.0
    patch = extract_patch(test_signal, N_CTX)
    prediction = infer_confide0(model, patch, n_steps=6)
    assert prediction.n_slices == 7
    for j in range(7):
        np.testing.assert_array_equal(prediction.fields[:, j], patch.last_slice)


def test_model_bytes_reach_a_fixed_point(constant_model):
    first = model_to_bytes(constant_model)
    reloaded = model_from_bytes(first)
    assert model_to_bytes(reloaded) == model_to_bytes(model_from_bytes(model_to_bytes(reloaded)))
    assert reloaded.spec() == constant_model.spec()


def test_load_model_from_missing_directory(tmp_path):
    with pytest.raises(DatasetError):
        load_model(tmp_path / "nothing")


def test_unknown_variant(grid_1d):
    with pytest.raises(ConfigError):
        ConfideModel(ConstantCoeffFamily(), grid_1d, N_CTX, variant="ae-only")
    with pytest.raises(ConfigError):
        Confide0Model(ConstantCoeffFamily(), grid_1d, N_CTX, variant="ae-only")


def test_grid_mode_freezes_heads_at_the_first_slice(grid_1d, rng):
    family = BurgersFamily()
    truth = family.true_estimate({"a": 1.2})
    init = np.zeros((1, 9))
    init[0, 1:-1] = rng.uniform(-1, 1, 7)
    frozen = freeze_heads(family, truth, init, grid_1d)
    np.testing.assert_array_equal(frozen.head("b")(np.ones(7)), -init[0, 1:-1])
    state_mode = solve_explicit(family, truth, init, grid_1d, 3)
    grid_mode = solve_explicit(family, frozen, init, grid_1d, 3)
    np.testing.assert_array_equal(grid_mode.fields[:, 1], state_mode.fields[:, 1])
    assert not np.array_equal(grid_mode.fields[:, 3], state_mode.fields[:, 3])


def test_infer_head_modes(grid_1d, tiny_network, burgers_dataset):
    model = ConfideModel(BurgersFamily(), grid_1d, N_CTX, tiny_network)
    patch = extract_patch(DatasetAdapter(burgers_dataset).signal(0), N_CTX)
    state_mode = infer(model, patch, n_steps=1)
    grid_mode = infer(model, patch, n_steps=1, head_mode="grid")
    np.testing.assert_array_equal(grid_mode.prediction.fields, state_mode.prediction.fields)
    with pytest.raises(ConfigError):
        infer(model, patch, head_mode="pointwise")


def named_grads(model, loss):
    names = [name for name, _ in model.named_parameters()]
    return dict(zip(names, grad(loss, model.parameters())))


def test_alpha_extremes_cut_the_other_branch(constant_model, test_signal):
    fields = np.asarray(test_signal.fields[None, :, :N_CTX], dtype=np.float64)
    grads = named_grads(constant_model, constant_model.losses(fields, alpha=1.0).total)
    assert all(not g.any() for name, g in grads.items() if name.startswith("estimator."))
    assert any(g.any() for name, g in grads.items() if name.startswith("decoder."))
    grads = named_grads(constant_model, constant_model.losses(fields, alpha=0.0).total)
    assert all(not g.any() for name, g in grads.items() if name.startswith("decoder."))
    assert any(g.any() for name, g in grads.items() if name.startswith("estimator."))


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.5, 1.0])
def test_total_loss_is_the_weighted_sum(alpha, constant_model, test_signal):
    windows = [test_signal.fields[:, :N_CTX], test_signal.fields[:, 3 : 3 + N_CTX]]
    fields = np.asarray(np.stack(windows), dtype=np.float64)
    parts = constant_model.losses(fields, alpha=alpha)
    expected = alpha * parts.ae.item() + (1.0 - alpha) * parts.coef.item()
    assert abs(parts.total.item() - expected) <= 1e-12


def test_decoder_sees_the_signal_initial_slice(constant_model, test_signal):
    decoder = constant_model.decoder
    seen = list()

    class RecordingDecoder:
        ic_aware = True

        def __call__(self, z, ic=None):
            seen.append(np.array(ic))
            return decoder(z, ic)

    constant_model.decoder = RecordingDecoder()
    patch = extract_patch(test_signal, N_CTX, offset=5)
    start = np.asarray(test_signal.fields[:, 0], dtype=np.float64)
    assert not np.array_equal(patch.first_slice, start)
    np.testing.assert_array_equal(patch.initial_condition, start)
    reconstruct(constant_model, patch)
    constant_model.losses(np.asarray(patch.fields[None], dtype=np.float64), 0.5, patch.initial[None])
    reconstruct(constant_model, stack_patches([patch, extract_patch(test_signal, N_CTX, 2)]))
    assert len(seen) == 3
    for ic in seen:
        for row in ic:
            np.testing.assert_array_equal(row, start)


def test_patches_without_a_parent_fall_back_to_their_first_slice(grid_1d, rng):
    fields = rng.standard_normal((1, N_CTX, 9))
    patch = Patch(grid_1d, fields)
    np.testing.assert_array_equal(patch.initial_condition, fields[:, 0])
    with pytest.raises(ShapeError):
        Patch(grid_1d, fields, initial=np.zeros((1, 7)))


def test_confide0_decoder_sees_the_signal_initial_slice(grid_1d, tiny_network, test_signal):
    model = Confide0Model(ConstantCoeffFamily(), grid_1d, N_CTX, tiny_network)
    decoder = model.decoder
    seen = list()

    class RecordingDecoder:
        ic_aware = True

        def __call__(self, z, ic=None):
            seen.append(np.array(ic))
            return decoder(z, ic)

    model.decoder = RecordingDecoder()
    patch = extract_patch(test_signal, N_CTX, offset=6)
    model.losses(np.asarray(patch.fields[None], dtype=np.float64), 0.5, patch.initial[None])
    np.testing.assert_array_equal(seen[0][0], test_signal.fields[:, 0])


def test_reconstruct_overfits_a_single_patch(constant_model, test_signal):
    patch = extract_patch(test_signal, N_CTX)
    fields = np.asarray(patch.fields[None], dtype=np.float64)
    params = constant_model.parameters()
    optimizer = Adam(params, lr=1e-2)
    for step in range(1500):
        if step == 1000:
            optimizer.state.lr = 1e-3
        optimizer.step(grad(constant_model.losses(fields, alpha=1.0).total, params))
    _, loss_ae = reconstruct(constant_model, patch)
    assert loss_ae < 1e-3


def test_confide0_learns_the_zero_signal(grid_1d, tiny_network):
    model = Confide0Model(ConstantCoeffFamily(), grid_1d, N_CTX, tiny_network, seed=5)
    patch = Patch(grid_1d, np.zeros((1, N_CTX, 9)))
    fields = np.zeros((1, 1, N_CTX, 9))
    params = model.parameters()
    optimizer = Adam(params, lr=1e-2)
    for _ in range(300):
        optimizer.step(grad(model.losses(fields, alpha=0.0).total, params))
    assert model.losses(fields, alpha=0.0).coef.item() < 1e-3
    prediction = infer_confide0(model, patch)
    assert prediction.n_slices == rollout_steps(model, patch) + 1
    assert np.max(np.abs(prediction.fields)) < 0.05


def test_saved_and_loaded_models_infer_identically(trained_constant, constant_dataset, tmp_path):
    model, manifest = load_model(trained_constant)
    save_model(model, tmp_path / "copy", manifest)
    reloaded, _ = load_model(tmp_path / "copy")
    ds = DatasetAdapter(constant_dataset)
    patch = extract_patch(ds.signal(ds.manifest.splits["test"][0]), model.n_ctx)
    first, second = infer(model, patch), infer(reloaded, patch)
    assert first.estimate.scalars == second.estimate.scalars
    np.testing.assert_array_equal(first.prediction.fields, second.prediction.fields)
    assert model_to_bytes(reloaded) == model_to_bytes(model)


def test_rollouts_need_at_least_one_step(constant_model, grid_1d, tiny_network, test_signal):
    patch = extract_patch(test_signal, N_CTX)
    with pytest.raises(ShapeError):
        infer(constant_model, patch, n_steps=0)
    with pytest.raises(ShapeError):
        infer_confide0(Confide0Model(ConstantCoeffFamily(), grid_1d, N_CTX, tiny_network), patch, n_steps=0)


def test_confide0_blowup_keeps_a_consistent_partial(grid_1d, tiny_network, test_signal):
    model = Confide0Model(ConstantCoeffFamily(), grid_1d, N_CTX, tiny_network)
    weight, bias = model.derivative.params[-2:]
    weight.data[...] = 0.0
    bias.data[...] = 1e6
    with pytest.raises(UnstableRolloutError) as info:
        infer_confide0(model, extract_patch(test_signal, N_CTX), n_steps=6)
    partial = info.value.partial
    assert info.value.step == 1
    assert partial.n_slices == partial.grid.n_t + 1 == 2
