"""Synthetic smoke images: bright shapes on a dark background."""

import numpy as np
import pytest
from PIL import Image, ImageDraw


def draw_scene(path, shapes, size=(160, 120)):
    """Write an RGB image with filled rectangles/ellipses; returns their masks."""
    img = Image.new("RGB", size, (12, 10, 14))
    draw = ImageDraw.Draw(img)
    masks = []
    for kind, box, color in shapes:
        if kind == "rect":
            draw.rectangle(box, fill=color)
        else:
            draw.ellipse(box, fill=color)
        m = Image.new("L", size, 0)
        md = ImageDraw.Draw(m)
        (md.rectangle if kind == "rect" else md.ellipse)(box, fill=255)
        masks.append(np.asarray(m) > 127)
    img.save(path)
    return masks


@pytest.fixture()
def smoke_images(tmp_path):
    """Three query images with two bright objects each."""
    img_dir = tmp_path / "images"
    img_dir.mkdir()
    layouts = [
        [("rect", (15, 15, 55, 60), (220, 120, 60)), ("ellipse", (90, 40, 140, 100), (80, 200, 120))],
        [("rect", (70, 10, 120, 50), (200, 200, 70)), ("ellipse", (15, 60, 60, 105), (90, 120, 230))],
        [("rect", (40, 45, 100, 95), (230, 90, 160)), ("ellipse", (110, 10, 150, 45), (120, 220, 220))],
    ]
    for i, shapes in enumerate(layouts):
        draw_scene(img_dir / f"scene0_im{i}.png", shapes)
    return img_dir


@pytest.fixture()
def template_tree(tmp_path):
    """Two objects, two template views each, with exact masks."""
    root = tmp_path / "tmpl"
    for object_id, (kind, color) in enumerate(
        [("rect", (210, 140, 60)), ("ellipse", (70, 190, 130))], start=1
    ):
        rgb = root / f"obj_{object_id}" / "rgb"
        mask_dir = root / f"obj_{object_id}" / "mask"
        rgb.mkdir(parents=True)
        mask_dir.mkdir(parents=True)
        for view, box in enumerate([(20, 20, 90, 80), (35, 10, 120, 100)]):
            masks = draw_scene(rgb / f"v{view}.png", [(kind, box, color)])
            Image.fromarray((masks[0] * 255).astype(np.uint8)).save(mask_dir / f"v{view}.png")
    return root
