# splat_avatar/core/optimizer.py
"""
Per-group Adam over splat tensors, with the state surgery densification needs
"""

from typing import Dict, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..exceptions import ShapeMismatch
from ..models.geometry_model import SplatSet
from ..models.training_model import AdamState, OptimConfig

# Parameter group name -> SplatSet field
PARAM_GROUPS = ("mu", "log_scale", "rot", "color", "opacity_logit", "sh_rest")
SH_REST_LR_FACTOR = 1.0 / 20.0


def adam_step(
    param: torch.Tensor, grad: torch.Tensor, state: AdamState, lr: float
) -> Tuple[torch.Tensor, AdamState]:
    """One bias-corrected Adam update of a single tensor; inputs are left untouched"""
    if param.shape != grad.shape:
        raise ShapeMismatch(f"param {tuple(param.shape)} and grad {tuple(grad.shape)} differ")
    if state.exp_avg.shape != param.shape or state.exp_avg_sq.shape != param.shape:
        raise ShapeMismatch(f"Adam moments do not match param {tuple(param.shape)}")

    p = nn.Parameter(param.detach().clone())
    opt = torch.optim.Adam([p], lr=lr, betas=(state.beta1, state.beta2), eps=state.eps, foreach=False)
    opt.state[p] = {
        "step": torch.tensor(float(state.step)),
        "exp_avg": state.exp_avg.detach().clone(),
        "exp_avg_sq": state.exp_avg_sq.detach().clone(),
    }
    p.grad = grad.detach().clone().to(p.dtype)
    opt.step()

    stored = opt.state[p]
    new_state = AdamState(
        exp_avg=stored["exp_avg"],
        exp_avg_sq=stored["exp_avg_sq"],
        step=int(stored["step"]),
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
    )
    return p.detach(), new_state


class GaussianOptimizer:
    """
    Adam with one named parameter group per splat field

        optimizer = GaussianOptimizer(SplatSet.initialize(n_faces), config)
        optimizer.zero_grad()
        ...loss.backward()...
        optimizer.step()            # also renormalizes quaternions
        optimizer.prune(keep_mask)  # moments follow the surviving splats
        optimizer.extend(children)  # children start with zero moments
    """

    def __init__(self, splats: SplatSet, config: OptimConfig):
        self.config = config
        self.binding = splats.binding.clone()
        lrs = self.learning_rates(config)
        groups = []
        for name in PARAM_GROUPS:
            tensor = getattr(splats, name).detach().clone()
            groups.append({"params": [nn.Parameter(tensor.requires_grad_(True))], "lr": lrs[name], "name": name})
        self.optimizer = torch.optim.Adam(groups, lr=0.0, betas=(0.9, 0.999), eps=1e-8, foreach=False)

    @staticmethod
    def learning_rates(config: OptimConfig) -> Dict[str, float]:
        return {
            "mu": config.lr_position,
            "log_scale": config.lr_scale,
            "rot": config.lr_rotation,
            "color": config.lr_color,
            "opacity_logit": config.lr_opacity,
            "sh_rest": config.lr_color * SH_REST_LR_FACTOR,
        }

    def _group(self, name: str) -> dict:
        for group in self.optimizer.param_groups:
            if group["name"] == name:
                return group
        raise KeyError(name)

    def param(self, name: str) -> nn.Parameter:
        return self._group(name)["params"][0]

    @property
    def params(self) -> SplatSet:
        """Live parameter view (leaves requiring grad) with the current binding"""
        return SplatSet(binding=self.binding, **{name: self.param(name) for name in PARAM_GROUPS})

    def splats(self) -> SplatSet:
        """Detached snapshot"""
        return self.params.detach()

    def __len__(self) -> int:
        return self.binding.shape[0]

    def zero_grad(self):
        self.optimizer.zero_grad(set_to_none=True)

    def step(self):
        self.optimizer.step()
        with torch.no_grad():
            rot = self.param("rot")
            rot.copy_(F.normalize(rot, dim=-1))

    def state_of(self, name: str) -> dict:
        return self.optimizer.state.get(self.param(name), {})

    def prune(self, keep: torch.Tensor):
        """Keep only rows where `keep` is True, in parameters and Adam moments alike"""
        for group in self.optimizer.param_groups:
            old = group["params"][0]
            stored_state = self.optimizer.state.get(old, None)
            group["params"][0] = nn.Parameter(old.detach()[keep].requires_grad_(True))
            if stored_state is not None:
                stored_state["exp_avg"] = stored_state["exp_avg"][keep]
                stored_state["exp_avg_sq"] = stored_state["exp_avg_sq"][keep]
                del self.optimizer.state[old]
                self.optimizer.state[group["params"][0]] = stored_state
        self.binding = self.binding[keep]

    def extend(self, new: SplatSet):
        """Append splats; their moments start at zero"""
        for group in self.optimizer.param_groups:
            old = group["params"][0]
            extension = getattr(new, group["name"]).detach().to(old.dtype)
            stored_state = self.optimizer.state.get(old, None)
            group["params"][0] = nn.Parameter(torch.cat((old.detach(), extension), dim=0).requires_grad_(True))
            if stored_state is not None:
                stored_state["exp_avg"] = torch.cat((stored_state["exp_avg"], torch.zeros_like(extension)), dim=0)
                stored_state["exp_avg_sq"] = torch.cat((stored_state["exp_avg_sq"], torch.zeros_like(extension)), dim=0)
                del self.optimizer.state[old]
                self.optimizer.state[group["params"][0]] = stored_state
        self.binding = torch.cat((self.binding, new.binding), dim=0)

    def replace(self, splats: SplatSet):
        """Swap in a new splat set with fresh moments"""
        self.__init__(splats, self.config)
