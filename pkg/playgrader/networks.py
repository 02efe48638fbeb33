"""Recurrent networks over transition tuples: the dueling Q-network and the feedback classifier."""
from __future__ import annotations

import logging
from typing import List, Optional, Tuple

import numpy as np

from playgrader.const import (
    ACTION_EMBED_DIM,
    CLASSIFIER_HEAD_DIM,
    CLASSIFIER_LSTM_DIM,
    CLASSIFIER_TUPLE_DIM,
    CLASSIFIER_TUPLE_HIDDEN_DIM,
    FORGET_BIAS,
    GRAD_NORM_CLIP,
    NULL_ACTION,
    NUM_ACTIONS,
    POLICY_LSTM_DIM,
    POLICY_TUPLE_DIM,
    REWARD_EMBED_DIM,
    STATE_EMBED_DIM,
    STATE_HIDDEN_DIM,
)
from playgrader.exceptions import PlayGraderConfigurationException
from playgrader.layers import (
    EmbeddingTable,
    Linear,
    LSTMCell,
    LstmState,
    ParameterSet,
    adam_step,
    backprop,
    check_finite,
    clip_grad_norm,
    linear_forward,
    load_checkpoint,
    save_checkpoint,
    softmax_cross_entropy,
)
from playgrader.tensor import Tensor, concat, no_grad, stack
from playgrader.trajectory import Trajectory, TupleBatch, Transition

_LOGGER = logging.getLogger(__name__)


class TupleEmbedder:
    """Embeds (s, a, r, s') into one vector; the state MLP is shared by s and s'."""

    def __init__(self, params: ParameterSet, name: str, obs_dim: int, mix_dims: Tuple[int, ...],
                 rng: np.random.Generator):
        self.state_in = Linear(params, f"{name}.state_in", obs_dim, STATE_HIDDEN_DIM, rng)
        self.state_out = Linear(params, f"{name}.state_out", STATE_HIDDEN_DIM, STATE_EMBED_DIM, rng)
        self.action = EmbeddingTable(params, f"{name}.action", NUM_ACTIONS + 1, ACTION_EMBED_DIM, rng)
        self.reward = Linear(params, f"{name}.reward", 1, REWARD_EMBED_DIM, rng)
        in_dim = 2 * STATE_EMBED_DIM + ACTION_EMBED_DIM + REWARD_EMBED_DIM
        self.mix = []
        for i, out_dim in enumerate(mix_dims):
            self.mix.append(Linear(params, f"{name}.mix{i}", in_dim, out_dim, rng))
            in_dim = out_dim
        self.obs_dim = obs_dim
        self.out_dim = in_dim

    def embed_state(self, state: Tensor) -> Tensor:
        return self.state_out(self.state_in(state).relu())

    def __call__(self, state: Tensor, action, reward: Tensor, next_state: Tensor) -> Tensor:
        if state.shape[-1] != self.obs_dim:
            raise PlayGraderConfigurationException(
                "Observation has width %s, network expects %s.", state.shape[-1], self.obs_dim)
        x = concat([self.embed_state(state), self.action(action), self.reward(reward), self.embed_state(next_state)])
        for i, layer in enumerate(self.mix):
            if i:
                x = x.relu()
            x = layer(x)
        return x


class RecurrentTupleNetwork:
    """Tuple embedder followed by an LSTM; one output per trajectory prefix."""

    kind = "recurrent"
    mix_dims: Tuple[int, ...] = ()
    lstm_dim = 0

    def __init__(self, obs_dim: int, seed: int = 0, dtype=np.float64, forget_bias: float = FORGET_BIAS):
        self.params = ParameterSet(dtype)
        self.obs_dim = obs_dim
        self.seed = seed
        self.forget_bias = forget_bias
        rng = np.random.default_rng(seed)
        self.embedder = TupleEmbedder(self.params, "embed", obs_dim, self.mix_dims, rng)
        self.lstm = LSTMCell(self.params, "lstm", self.embedder.out_dim, self.lstm_dim, rng, forget_bias)
        self._build_head(rng)

    def _build_head(self, rng: np.random.Generator):
        raise NotImplementedError

    @property
    def dtype(self):
        return self.params.dtype

    def _tensor(self, values) -> Tensor:
        return Tensor(np.asarray(values, dtype=self.dtype))

    def encode_tuple(self, state: LstmState, s, a, r, s_next) -> Tuple[Tensor, LstmState]:
        x = self.embedder(self._tensor(s), np.asarray(a), self._tensor(r), self._tensor(s_next))
        return self.lstm(x, state)

    def start(self, observation) -> Tuple[Tensor, LstmState]:
        """Hidden output for the start-token tuple (s_0, null action, 0, s_0)."""
        return self.encode_tuple(self.lstm.initial_state(), observation, NULL_ACTION, [0.0], observation)

    def advance(self, state: LstmState, transition: Transition) -> Tuple[Tensor, LstmState]:
        return self.encode_tuple(state, transition.observation, int(transition.action), [transition.reward],
                                 transition.next_observation)

    def encode_trajectory(self, trajectory: Trajectory) -> List[Tensor]:
        """Hidden outputs for the prefixes τ_{:0} … τ_{:T} in one streaming pass."""
        hidden, state = self.start(trajectory.initial_observation)
        outputs = [hidden]
        for transition in trajectory.transitions:
            hidden, state = self.advance(state, transition)
            outputs.append(hidden)
        return outputs

    def encode_batch(self, batch: TupleBatch) -> Tensor:
        """Stacked hidden outputs of shape (L, B, H); padded steps are computed but meaningless."""
        state = self.lstm.initial_state(batch.batch_size)
        outputs = []
        for t in range(batch.steps):
            hidden, state = self.encode_tuple(state, batch.states[t], batch.actions[t], batch.rewards[t],
                                              batch.next_states[t])
            outputs.append(hidden)
        return stack(outputs)

    def optimise(self, loss: Tensor, lr: float, what: str) -> float:
        check_finite(loss, what)
        grads = clip_grad_norm(backprop(loss, self.params), GRAD_NORM_CLIP)
        adam_step(self.params, grads, lr)
        return loss.item()

    # -----checkpoints-----

    def header(self) -> dict:
        return {
            "kind": self.kind,
            "obs_dim": self.obs_dim,
            "seed": self.seed,
            "forget_bias": self.forget_bias,
            "lstm_dim": self.lstm_dim,
            "mix_dims": list(self.mix_dims),
        }

    def save(self, path, **extra):
        save_checkpoint(path, self.params, dict(self.header(), **extra))

    @classmethod
    def from_checkpoint(cls, path):
        arrays, header = load_checkpoint(path)
        if header.get("kind") != cls.kind:
            raise PlayGraderConfigurationException("%s holds a %s, not a %s.", path, header.get("kind"), cls.kind)
        network = cls(header["obs_dim"], header.get("seed", 0), header.get("precision", "float64"),
                      header.get("forget_bias", FORGET_BIAS))
        network.params.load_arrays(arrays)
        network.params.step = header.get("adam_step", 0)
        return network, header


def dueling_combine(value: Tensor, advantage: Tensor) -> Tensor:
    """Q = V + A − mean_a A, with the centering done as one fixed linear map."""
    actions = advantage.shape[-1]
    centering = np.eye(actions, dtype=advantage.dtype) - 1.0 / actions
    centered = linear_forward(Tensor(centering), Tensor(np.zeros(actions, dtype=advantage.dtype)), advantage)
    return value + centered


class QNetwork(RecurrentTupleNetwork):
    kind = "qnetwork"
    mix_dims = (POLICY_TUPLE_DIM,)
    lstm_dim = POLICY_LSTM_DIM

    def _build_head(self, rng):
        self.value_head = Linear(self.params, "value", POLICY_LSTM_DIM, 1, rng)
        self.advantage_head = Linear(self.params, "advantage", POLICY_LSTM_DIM, NUM_ACTIONS, rng)

    def heads(self, hidden: Tensor) -> Tuple[Tensor, Tensor]:
        return self.value_head(hidden), self.advantage_head(hidden)

    def q_values(self, hidden: Tensor) -> Tensor:
        return dueling_combine(*self.heads(hidden))

    def q_forward(self, trajectory: Trajectory) -> np.ndarray:
        """Q-values for every prefix of ``trajectory``, shape (T+1, |A|)."""
        with no_grad():
            return self.q_values(stack(self.encode_trajectory(trajectory))).data

    def q_batch(self, batch: TupleBatch) -> Tensor:
        return self.q_values(self.encode_batch(batch))


class QActor:
    """Streams a QNetwork along a live episode and acts ε-greedily on each prefix."""

    def __init__(self, network: QNetwork, epsilon: float, rng: np.random.Generator, choose):
        self.network = network
        self.epsilon = epsilon
        self.rng = rng
        self.choose = choose
        self._state: Optional[LstmState] = None

    def _act(self, hidden: Tensor) -> int:
        return self.choose(self.network.q_values(hidden).data, self.epsilon, self.rng)

    def begin(self, observation) -> int:
        with no_grad():
            hidden, self._state = self.network.start(observation)
            return self._act(hidden)

    def advance(self, transition: Transition) -> int:
        with no_grad():
            hidden, self._state = self.network.advance(self._state, transition)
            return self._act(hidden)


class FeedbackClassifier(RecurrentTupleNetwork):
    """g(y_k | τ_{:t}) for one rubric dimension."""

    kind = "classifier"
    mix_dims = (CLASSIFIER_TUPLE_HIDDEN_DIM, CLASSIFIER_TUPLE_DIM)
    lstm_dim = CLASSIFIER_LSTM_DIM

    def _build_head(self, rng):
        self.head = [
            Linear(self.params, "head0", CLASSIFIER_LSTM_DIM, CLASSIFIER_HEAD_DIM, rng),
            Linear(self.params, "head1", CLASSIFIER_HEAD_DIM, CLASSIFIER_HEAD_DIM, rng),
            Linear(self.params, "head2", CLASSIFIER_HEAD_DIM, 2, rng),
        ]

    def logits(self, hidden: Tensor) -> Tensor:
        x = hidden
        for i, layer in enumerate(self.head):
            if i:
                x = x.relu()
            x = layer(x)
        return x

    def classify_prefixes(self, trajectory: Trajectory) -> np.ndarray:
        """Distributions over {0, 1} for τ_{:0} … τ_{:T}, shape (T+1, 2)."""
        return np.exp(self.log_prob_prefixes(trajectory))

    def log_prob_prefixes(self, trajectory: Trajectory) -> np.ndarray:
        with no_grad():
            return np.stack([self.logits(h).log_softmax().data for h in self.encode_trajectory(trajectory)])

    def classify(self, trajectory: Trajectory) -> np.ndarray:
        return self.classify_prefixes(trajectory)[-1]

    def update(self, trajectory: Trajectory, bit: int, lr: float, all_prefixes: bool = False) -> float:
        """One supervised step on −log g(bit | τ); optionally on every prefix."""
        outputs = self.encode_trajectory(trajectory)
        if all_prefixes:
            logits = self.logits(stack(outputs))
            loss, _ = softmax_cross_entropy(logits, np.full(len(outputs), int(bit)))
        else:
            loss, _ = softmax_cross_entropy(self.logits(outputs[-1]), int(bit))
        return self.optimise(loss, lr, "classifier")


def predict_bit(distribution: np.ndarray) -> int:
    """argmax over {0, 1}; a tie means "error absent"."""
    return int(distribution[1] > distribution[0])
