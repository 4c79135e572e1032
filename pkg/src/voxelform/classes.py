"""The two form families and their class ids.

Class 0 is the human-designed family, class 1 the machine-generated one.
The id order matters: argmax ties resolve to the lower id, i.e. human.
"""

LABEL_HUMAN = "human"
LABEL_MACHINE = "machine"

CLASS_IDS = {LABEL_HUMAN: 0, LABEL_MACHINE: 1}
ID_LABELS = {0: LABEL_HUMAN, 1: LABEL_MACHINE}


def class_id(label) -> int:
    if isinstance(label, str):
        if label not in CLASS_IDS:
            raise ValueError(f"unknown class label {label!r}")
        return CLASS_IDS[label]
    label = int(label)
    if label not in ID_LABELS:
        raise ValueError(f"unknown class id {label}")
    return label
