'''
@description: Forward-mode gradient engines for deep recurrent networks: exact deep RTRL,
deep E-prop and the oracles they are checked against.
'''
from .eprop import DeepEprop, deep_eprop_episode, eprop_episode
from .network import GraphSpec, LayerSpec, NetworkSpec, init_params, load_spec, parse_spec, rollout
from .oracles import bptt_gradient, enumerate_gradient_paths, finite_diff_gradient
from .rtrl import DeepRTRL, deep_rtrl_episode, rtrl_episode
