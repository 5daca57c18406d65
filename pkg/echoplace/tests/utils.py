from echoplace.scene import load_scene

__all__ = (
    'free_field_document',
    'free_field_scene',
    'shoebox_document',
    'shoebox_scene',
    'two_rooms_scene',
)


def shoebox_document(size=(2.0, 1.5, 1.2), preset='rigid', **extra):
    """
    A closed box room with every surface of a single preset material.
    """
    document = {
        'materials': [
            {'name': 'walls', 'preset': preset},
        ],
        'mesh': {
            'boxes': [
                {'min': [0, 0, 0], 'max': list(size), 'material': 'walls'},
            ],
        },
        'air': [
            {'min': [0, 0, 0], 'max': list(size)},
        ],
    }
    document.update(extra)
    return document


def shoebox_scene(size=(2.0, 1.5, 1.2), preset='rigid', **extra):
    return load_scene(shoebox_document(size, preset, **extra))


def free_field_document(**extra):
    """
    A large air volume without any surfaces.
    """
    document = {
        'mesh': {},
        'air': [
            {'min': [-5, -5, -5], 'max': [5, 5, 5]},
        ],
    }
    document.update(extra)
    return document


def free_field_scene(**extra):
    return load_scene(free_field_document(**extra))


def two_rooms_scene():
    """
    Two 2 m cubes side by side, separated by a solid wall at x = 2.
    """
    return load_scene({
        'materials': [
            {'name': 'walls', 'preset': 'concrete'},
        ],
        'mesh': {
            'boxes': [
                {'min': [0, 0, 0], 'max': [4, 2, 2], 'material': 'walls'},
            ],
            'triangles': [
                {'vertices': [[2, 0, 0], [2, 2, 0], [2, 2, 2]], 'material': 'walls'},
                {'vertices': [[2, 0, 0], [2, 2, 2], [2, 0, 2]], 'material': 'walls'},
            ],
        },
        'air': [
            {'min': [0, 0, 0], 'max': [4, 2, 2]},
        ],
    })
