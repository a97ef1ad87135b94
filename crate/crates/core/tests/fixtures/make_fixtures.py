"""Regenerates the tiny ONNX graphs used by the backend tests.

quadrant.onnx        logits = per-quadrant mean intensity of a 224x224 patch
quadrant_probs.onnx  same, followed by Softmax
two_inputs.onnx      two inputs, rejected by the loader
"""
import json
import os

import onnx
from onnx import TensorProto, helper

HERE = os.path.dirname(os.path.abspath(__file__))
SIDE = 224


def quadrant_graph(with_softmax):
    x = helper.make_tensor_value_info("input", TensorProto.FLOAT, ["N", 3, SIDE, SIDE])
    y = helper.make_tensor_value_info("scores", TensorProto.FLOAT, ["N", 4])
    nodes = [
        helper.make_node("ReduceMean", ["input"], ["gray"], axes=[1], keepdims=1),
        helper.make_node(
            "AveragePool", ["gray"], ["pooled"],
            kernel_shape=[SIDE // 2, SIDE // 2], strides=[SIDE // 2, SIDE // 2],
        ),
        helper.make_node("Flatten", ["pooled"], ["logits" if with_softmax else "scores"], axis=1),
    ]
    if with_softmax:
        nodes.append(helper.make_node("Softmax", ["logits"], ["scores"], axis=1))
    graph = helper.make_graph(nodes, "quadrant", [x], [y])
    return graph


def save(graph, name):
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
    model.ir_version = 8
    onnx.checker.check_model(model)
    onnx.save(model, os.path.join(HERE, name))


def main():
    save(quadrant_graph(False), "quadrant.onnx")
    save(quadrant_graph(True), "quadrant_probs.onnx")

    a = helper.make_tensor_value_info("a", TensorProto.FLOAT, [1, 3, SIDE, SIDE])
    b = helper.make_tensor_value_info("b", TensorProto.FLOAT, [1, 3, SIDE, SIDE])
    out = helper.make_tensor_value_info("sum", TensorProto.FLOAT, [1, 3, SIDE, SIDE])
    add = helper.make_node("Add", ["a", "b"], ["sum"])
    save(helper.make_graph([add], "two_inputs", [a, b], [out]), "two_inputs.onnx")

    labels = ["top-left", "top-right", "bottom-left", "bottom-right"]
    for name, logits in [("quadrant.json", True), ("quadrant_probs.json", False)]:
        meta = {
            "input_size": SIDE,
            "mean": [0.0, 0.0, 0.0],
            "std": [1.0, 1.0, 1.0],
            "emits_logits": logits,
            "labels": labels,
        }
        with open(os.path.join(HERE, name), "w") as f:
            json.dump(meta, f, indent=2)
            f.write("\n")


if __name__ == "__main__":
    main()
