import hashlib
import itertools
import json
import logging
from pathlib import Path

import numpy as np
import trimesh
from django.core.exceptions import ValidationError

from . import default_settings
from .choices import ViolationCodeChoices
from .constants import DEFAULT_SOURCE_LEVEL, MATERIAL_PRESETS, OCTAVE_BANDS, UPPER_BAND_EDGE
from .exceptions import ConfigNotFound, SceneInvalid
from .models import Box, Material, NoiseSource, Scene, SourceRegion

__all__ = (
    'load_mesh',
    'load_scene',
    'load_scene_file',
    'scene_digest',
    'scene_volume',
    'serialize_scene',
    'validate_scene',
)

BAND_COUNT = len(OCTAVE_BANDS)

# Default scattering coefficient for materials which declare none
DEFAULT_SCATTERING = 0.1

# Physics keys which are Scene fields rather than settings overrides
SCENE_PHYSICS = {
    'speed_of_sound': float,
    'sample_rate': int,
}


def violation(code, path, message):
    return ValidationError(f'{path}: {message}', code=code, params={'path': path})


class SceneParser:
    """
    Build a Scene from a parsed scene document, collecting a violation for every malformed element.
    """
    def __init__(self, document, base_dir=None):
        self.document = document
        self.base_dir = Path(base_dir) if base_dir else None
        self.violations = []

    def error(self, code, path, message):
        self.violations.append(violation(code, path, message))

    def vector(self, value, path, length=3):
        try:
            vector = tuple(float(v) for v in value)
        except (TypeError, ValueError):
            self.error(ViolationCodeChoices.PARSE_ERROR, path, f"expected {length} numbers")
            return None
        if len(vector) != length:
            self.error(ViolationCodeChoices.PARSE_ERROR, path, f"expected {length} numbers (got {len(vector)})")
            return None
        return vector

    def band_values(self, value, path):
        """
        Parse a per-band list; a scalar applies to every band.
        """
        if isinstance(value, (int, float)):
            return (float(value),) * BAND_COUNT
        try:
            values = tuple(float(v) for v in value)
        except (TypeError, ValueError):
            self.error(ViolationCodeChoices.BAD_SPECTRUM, path, "expected a number per octave band")
            return None
        if len(values) != BAND_COUNT:
            self.error(
                ViolationCodeChoices.BAD_SPECTRUM, path, f"expected {BAND_COUNT} band values (got {len(values)})"
            )
            return None
        return values

    def box(self, entry, path, material=None):
        if not isinstance(entry, dict) or 'min' not in entry or 'max' not in entry:
            self.error(ViolationCodeChoices.MISSING_KEY, path, "a box needs 'min' and 'max'")
            return None
        lo = self.vector(entry['min'], f'{path}.min')
        hi = self.vector(entry['max'], f'{path}.max')
        if lo is None or hi is None:
            return None
        return Box(lo=lo, hi=hi, material=material)

    def resolve_path(self, value):
        path = Path(value)
        if self.base_dir and not path.is_absolute():
            path = self.base_dir / path
        return path

    def parse_materials(self):
        materials = []
        for i, entry in enumerate(self.document.get('materials', [])):
            path = f'materials[{i}]'
            if not isinstance(entry, dict) or 'name' not in entry:
                self.error(ViolationCodeChoices.MISSING_KEY, path, "a material needs a 'name'")
                continue
            preset = entry.get('preset')
            base = {}
            if preset is not None:
                if preset not in MATERIAL_PRESETS:
                    self.error(ViolationCodeChoices.DANGLING_MATERIAL, f'{path}.preset', f"unknown preset '{preset}'")
                    continue
                base = MATERIAL_PRESETS[preset]
            if 'absorption' not in entry and 'absorption' not in base:
                self.error(ViolationCodeChoices.MISSING_KEY, path, "a material needs 'absorption' or a 'preset'")
                continue
            absorption = self.band_values(entry.get('absorption', base.get('absorption')), f'{path}.absorption')
            scattering = self.band_values(
                entry.get('scattering', base.get('scattering', DEFAULT_SCATTERING)), f'{path}.scattering'
            )
            if absorption is None or scattering is None:
                continue
            materials.append(Material(
                name=str(entry['name']),
                absorption=absorption,
                scattering=scattering,
                preset=preset,
            ))
        return materials

    def parse_mesh(self, materials):
        """
        Return (triangles, material indices) gathered from the mesh's boxes, inline triangles and OBJ file.
        """
        names = {material.name: i for i, material in enumerate(materials)}
        mesh = self.document.get('mesh', {})
        triangles, indices = [], []

        def material_index(name, path):
            if name not in names:
                self.error(ViolationCodeChoices.DANGLING_MATERIAL, path, f"material '{name}' is not defined")
                return None
            return names[name]

        for i, entry in enumerate(mesh.get('boxes', [])):
            path = f'mesh.boxes[{i}]'
            box = self.box(entry, path, material=entry.get('material') if isinstance(entry, dict) else None)
            if box is None:
                continue
            if (index := material_index(box.material, f'{path}.material')) is not None:
                triangles.append(box.triangles())
                indices.extend([index] * 12)

        for i, entry in enumerate(mesh.get('triangles', [])):
            path = f'mesh.triangles[{i}]'
            try:
                vertices = np.array(entry['vertices'], dtype=float).reshape(1, 3, 3)
            except (KeyError, TypeError, ValueError):
                self.error(ViolationCodeChoices.PARSE_ERROR, path, "a triangle needs three 3-D 'vertices'")
                continue
            if (index := material_index(entry.get('material'), f'{path}.material')) is not None:
                triangles.append(vertices)
                indices.append(index)

        if 'path' in mesh:
            mesh_triangles, mesh_indices, violations = load_mesh(
                self.resolve_path(mesh['path']), mesh.get('materials', {}), names
            )
            self.violations.extend(violations)
            triangles.append(mesh_triangles)
            indices.extend(mesh_indices)

        if triangles:
            return np.concatenate(triangles), np.array(indices, dtype=np.int64)
        return np.zeros((0, 3, 3)), np.zeros(0, dtype=np.int64)

    def parse_sources(self):
        sources = []
        for i, entry in enumerate(self.document.get('sources', [])):
            path = f'sources[{i}]'
            if (box := self.box(entry, path)) is None:
                continue
            clip = entry.get('clip')
            spectrum = entry.get('spectrum')
            if spectrum is not None:
                spectrum = self.band_values(spectrum, f'{path}.spectrum')
            elif clip is None:
                spectrum = (DEFAULT_SOURCE_LEVEL,) * BAND_COUNT
            sources.append(SourceRegion(
                box=box,
                weight=float(entry.get('weight', 1.0)),
                clip=str(self.resolve_path(clip)) if clip is not None else None,
                spectrum=spectrum,
            ))
        return sources

    def parse_noise(self):
        noise = []
        for i, entry in enumerate(self.document.get('noise', [])):
            path = f'noise[{i}]'
            if not isinstance(entry, dict) or 'position' not in entry or 'spectrum' not in entry:
                self.error(ViolationCodeChoices.MISSING_KEY, path, "a noise source needs 'position' and 'spectrum'")
                continue
            position = self.vector(entry['position'], f'{path}.position')
            spectrum = self.band_values(entry['spectrum'], f'{path}.spectrum')
            if position is not None and spectrum is not None:
                noise.append(NoiseSource(position=position, spectrum=spectrum))
        return noise

    def parse_physics(self):
        physics = dict(self.document.get('physics', {}))
        fields = {}
        for key, cast in SCENE_PHYSICS.items():
            if key in physics:
                try:
                    fields[key] = cast(physics.pop(key))
                except (TypeError, ValueError):
                    self.error(ViolationCodeChoices.BAD_PHYSICS, f'physics.{key}', "expected a number")
        for key in physics:
            if key not in default_settings:
                self.error(ViolationCodeChoices.BAD_PHYSICS, f'physics.{key}', "unknown setting")
        return fields, {key: value for key, value in physics.items() if key in default_settings}

    def parse(self):
        if not isinstance(self.document, dict):
            self.error(ViolationCodeChoices.PARSE_ERROR, '$', "a scene document must be an object")
            raise SceneInvalid(self.violations)
        for key in ('mesh', 'air'):
            if key not in self.document:
                self.error(ViolationCodeChoices.MISSING_KEY, key, "required")

        materials = self.parse_materials()
        triangles, triangle_materials = self.parse_mesh(materials)
        air = [self.box(entry, f'air[{i}]') for i, entry in enumerate(self.document.get('air', []))]
        listener_boxes = [
            self.box(entry, f'listener_boxes[{i}]') for i, entry in enumerate(self.document.get('listener_boxes', []))
        ]
        sources = self.parse_sources()
        noise = self.parse_noise()
        physics, settings = self.parse_physics()

        if self.violations:
            raise SceneInvalid(self.violations)

        return Scene(
            triangles=triangles,
            triangle_materials=triangle_materials,
            air=tuple(air),
            materials=tuple(materials),
            sources=tuple(sources),
            noise=tuple(noise),
            listener_boxes=tuple(listener_boxes),
            settings=settings,
            **physics,
        )


def load_mesh(path, material_map, material_names):
    """
    Load an OBJ (or any mesh trimesh reads) and assign a material to each of its geometries.

    Args:
        path: Mesh file
        material_map: Maps geometry, object or visual material names to scene material names; the key
            "*" applies to anything unmatched
        material_names: Maps scene material names to material indices

    Returns:
        (triangles, material indices, violations)
    """
    logger = logging.getLogger('echoplace.scene')
    path = Path(path)
    if not path.exists():
        return np.zeros((0, 3, 3)), [], [
            violation(ViolationCodeChoices.MESH_NOT_FOUND, 'mesh.path', f"'{path}' does not exist")
        ]

    scene = trimesh.load(path, force='scene')
    triangles, indices, violations = [], [], []
    for node_name in scene.graph.nodes_geometry:
        transform, geometry_name = scene.graph[node_name]
        mesh = scene.geometry[geometry_name].copy()
        mesh.apply_transform(transform)

        keys = [geometry_name, node_name, mesh.metadata.get('name')]
        visual_material = getattr(getattr(mesh, 'visual', None), 'material', None)
        if visual_material is not None:
            keys.append(getattr(visual_material, 'name', None))
        match = next((material_map[key] for key in keys if key in material_map), material_map.get('*'))
        if match is None or match not in material_names:
            violations.append(violation(
                ViolationCodeChoices.DANGLING_MATERIAL,
                f'mesh.materials[{geometry_name}]',
                f"material '{match}' is not defined" if match else f"no material assigned to '{geometry_name}'"
            ))
            continue

        logger.debug(f"Mesh geometry {geometry_name}: {len(mesh.faces)} faces assigned to {match}")
        triangles.append(np.asarray(mesh.triangles, dtype=float))
        indices.extend([material_names[match]] * len(mesh.faces))

    logger.info(f"Loaded {sum(len(t) for t in triangles)} triangles from {path}")
    if triangles:
        return np.concatenate(triangles), indices, violations
    return np.zeros((0, 3, 3)), indices, violations


def validate_scene(scene):
    """
    Check every Scene invariant. Returns a list of ValidationErrors; an empty list means the scene is
    valid.
    """
    violations = []

    def error(code, path, message):
        violations.append(violation(code, path, message))

    def check_box(box, path, require_volume=False):
        extent = box.extent
        if (extent < 0).any() or (require_volume and (extent <= 0).any()):
            error(ViolationCodeChoices.DEGENERATE_BOX, path, f"min {box.lo} must lie below max {box.hi}")
            return False
        return True

    def check_inside_air(box, path):
        if air and check_box(box, path) and not scene.in_air(box.lattice()).all():
            error(ViolationCodeChoices.BOX_OUTSIDE_AIR, path, "box extends outside the air volume")

    def check_coefficients(values, path):
        if len(values) != BAND_COUNT:
            error(ViolationCodeChoices.BAD_SPECTRUM, path, f"expected {BAND_COUNT} band values (got {len(values)})")
        for j, value in enumerate(values):
            if not 0.0 <= value <= 1.0:
                error(ViolationCodeChoices.COEFFICIENT_OUT_OF_RANGE, f'{path}[{j}]', f"{value} is outside [0, 1]")

    # Air volume
    air = [box for i, box in enumerate(scene.air) if check_box(box, f'air[{i}]', require_volume=True)]
    if not scene.air:
        error(ViolationCodeChoices.EMPTY_AIR, 'air', "at least one air box is required")

    # Materials
    for i, material in enumerate(scene.materials):
        check_coefficients(material.absorption, f'materials[{i}].absorption')
        check_coefficients(material.scattering, f'materials[{i}].scattering')
    dangling = np.flatnonzero((scene.triangle_materials < 0) | (scene.triangle_materials >= len(scene.materials)))
    for i in dangling:
        error(
            ViolationCodeChoices.DANGLING_MATERIAL,
            f'mesh.triangles[{i}]',
            f"material index {scene.triangle_materials[i]} is not defined"
        )

    # Sources
    for i, region in enumerate(scene.sources):
        path = f'sources[{i}]'
        if region.weight < 0:
            error(ViolationCodeChoices.NEGATIVE_WEIGHT, f'{path}.weight', f"{region.weight} is negative")
        if region.clip is not None and region.spectrum is not None:
            error(ViolationCodeChoices.CLIP_AND_SPECTRUM, path, "give either a clip or a spectrum, not both")
        if region.spectrum is not None and len(region.spectrum) != BAND_COUNT:
            error(ViolationCodeChoices.BAD_SPECTRUM, f'{path}.spectrum', f"expected {BAND_COUNT} band levels")
        check_inside_air(region.box, path)
    if scene.sources and not any(region.weight > 0 for region in scene.sources):
        error(ViolationCodeChoices.NO_POSITIVE_WEIGHT, 'sources', "at least one source region needs a positive weight")

    # Noise
    for i, noise in enumerate(scene.noise):
        if len(noise.spectrum) != BAND_COUNT:
            error(ViolationCodeChoices.BAD_SPECTRUM, f'noise[{i}].spectrum', f"expected {BAND_COUNT} band levels")
        if air and not scene.in_air([noise.position]).all():
            error(ViolationCodeChoices.POINT_OUTSIDE_AIR, f'noise[{i}].position', "position lies outside the air")

    # Listener boxes
    for i, box in enumerate(scene.listener_boxes):
        check_inside_air(box, f'listener_boxes[{i}]')

    # Physics
    if scene.sample_rate < 2 * UPPER_BAND_EDGE:
        error(
            ViolationCodeChoices.SAMPLE_RATE_TOO_LOW,
            'physics.sample_rate',
            f"{scene.sample_rate} Hz cannot represent the 8 kHz band (need at least {2 * UPPER_BAND_EDGE:.0f} Hz)"
        )
    if scene.speed_of_sound <= 0:
        error(ViolationCodeChoices.BAD_PHYSICS, 'physics.speed_of_sound', "must be positive")

    return violations


def load_scene(document, base_dir=None):
    """
    Parse and validate a scene document (a JSON string or an already-decoded dict). Relative mesh and
    clip paths are resolved against base_dir.
    """
    logger = logging.getLogger('echoplace.scene')

    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise SceneInvalid([violation(ViolationCodeChoices.PARSE_ERROR, '$', str(e))])

    scene = SceneParser(document, base_dir).parse()
    if violations := validate_scene(scene):
        for v in violations:
            logger.error(v.message)
        raise SceneInvalid(violations)

    logger.info(f"Loaded scene {scene!r}")
    return scene


def load_scene_file(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFound(f"Scene config '{path}' not found")
    return load_scene(path.read_text(), base_dir=path.parent)


def serialize_scene(scene):
    """
    Return a scene document which load_scene() turns back into an equivalent Scene. The mesh is
    written as inline triangles.
    """
    def box(b):
        return {'min': list(b.lo), 'max': list(b.hi)}

    materials = []
    for material in scene.materials:
        entry = {
            'name': material.name,
            'absorption': list(material.absorption),
            'scattering': list(material.scattering),
        }
        if material.preset:
            entry['preset'] = material.preset
        materials.append(entry)

    sources = []
    for region in scene.sources:
        entry = {**box(region.box), 'weight': region.weight}
        if region.clip is not None:
            entry['clip'] = region.clip
        if region.spectrum is not None:
            entry['spectrum'] = list(region.spectrum)
        sources.append(entry)

    return {
        'mesh': {
            'triangles': [
                {'vertices': triangle.tolist(), 'material': scene.materials[index].name}
                for triangle, index in zip(scene.triangles, scene.triangle_materials)
            ],
        },
        'air': [box(b) for b in scene.air],
        'materials': materials,
        'sources': sources,
        'noise': [
            {'position': list(noise.position), 'spectrum': list(noise.spectrum)} for noise in scene.noise
        ],
        'listener_boxes': [box(b) for b in scene.listener_boxes],
        'physics': {
            'speed_of_sound': scene.speed_of_sound,
            'sample_rate': scene.sample_rate,
            **scene.settings,
        },
    }


def scene_digest(scene):
    canonical = json.dumps(serialize_scene(scene), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode()).hexdigest()


def scene_volume(scene):
    """
    Volume (m^3) of the union of the scene's air boxes.
    """
    los = np.array([box.lo for box in scene.air], dtype=float)
    his = np.array([box.hi for box in scene.air], dtype=float)
    edges = [np.unique(np.concatenate([los[:, axis], his[:, axis]])) for axis in range(3)]
    volume = 0.0
    for i, j, k in itertools.product(*(range(len(e) - 1) for e in edges)):
        lo = np.array([edges[0][i], edges[1][j], edges[2][k]])
        hi = np.array([edges[0][i + 1], edges[1][j + 1], edges[2][k + 1]])
        if scene.in_air([(lo + hi) / 2]).all():
            volume += float(np.prod(hi - lo))
    return volume
