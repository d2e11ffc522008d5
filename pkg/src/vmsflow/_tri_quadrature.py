"""Symmetric Gauss rules for the unit reference triangle.

Classical symmetric rules with all points inside the triangle and all weights
positive, keyed by polynomial exactness degree.  Points are cartesian (x, y)
on the triangle {x >= 0, y >= 0, x + y <= 1}; weights sum to the reference
measure 1/2.  Degrees with no positive-weight symmetric rule (3, 7, 11) are
served by the next rule up.
"""

import numpy as np

_TRI_RULES = {
    1: (
        np.array([
            [0.333333333333333, 0.333333333333333],
        ]),
        np.array([
            0.5,
        ]),
    ),
    2: (
        np.array([
            [0.666666666666667, 0.166666666666667],
            [0.166666666666667, 0.166666666666667],
            [0.166666666666667, 0.666666666666667],
        ]),
        np.array([
            0.1666666666666665,
            0.1666666666666665,
            0.1666666666666665,
        ]),
    ),
    4: (
        np.array([
            [0.10810301816807, 0.445948490915965],
            [0.445948490915965, 0.445948490915965],
            [0.445948490915965, 0.10810301816807],
            [0.816847572980459, 0.091576213509771],
            [0.091576213509771, 0.091576213509771],
            [0.091576213509771, 0.816847572980459],
        ]),
        np.array([
            0.1116907948390055,
            0.1116907948390055,
            0.1116907948390055,
            0.054975871827661,
            0.054975871827661,
            0.054975871827661,
        ]),
    ),
    5: (
        np.array([
            [0.333333333333333, 0.333333333333333],
            [0.05971587178977, 0.470142064105115],
            [0.470142064105115, 0.470142064105115],
            [0.470142064105115, 0.05971587178977],
            [0.797426985353087, 0.101286507323456],
            [0.101286507323456, 0.101286507323456],
            [0.101286507323456, 0.797426985353087],
        ]),
        np.array([
            0.1125,
            0.066197076394253,
            0.066197076394253,
            0.066197076394253,
            0.0629695902724135,
            0.0629695902724135,
            0.0629695902724135,
        ]),
    ),
    6: (
        np.array([
            [0.501426509658179, 0.24928674517091],
            [0.24928674517091, 0.24928674517091],
            [0.24928674517091, 0.501426509658179],
            [0.873821971016996, 0.063089014491502],
            [0.063089014491502, 0.063089014491502],
            [0.063089014491502, 0.873821971016996],
            [0.053145049844817, 0.310352451033784],
            [0.310352451033784, 0.636502499121399],
            [0.636502499121399, 0.053145049844817],
            [0.310352451033784, 0.053145049844817],
            [0.636502499121399, 0.310352451033784],
            [0.053145049844817, 0.636502499121399],
        ]),
        np.array([
            0.0583931378631895,
            0.0583931378631895,
            0.0583931378631895,
            0.0254224531851035,
            0.0254224531851035,
            0.0254224531851035,
            0.041425537809187,
            0.041425537809187,
            0.041425537809187,
            0.041425537809187,
            0.041425537809187,
            0.041425537809187,
        ]),
    ),
    8: (
        np.array([
            [0.333333333333333, 0.333333333333333],
            [0.081414823414554, 0.459292588292723],
            [0.459292588292723, 0.459292588292723],
            [0.459292588292723, 0.081414823414554],
            [0.65886138449648, 0.17056930775176],
            [0.17056930775176, 0.17056930775176],
            [0.17056930775176, 0.65886138449648],
            [0.898905543365938, 0.050547228317031],
            [0.050547228317031, 0.050547228317031],
            [0.050547228317031, 0.898905543365938],
            [0.008394777409958, 0.263112829634638],
            [0.263112829634638, 0.728492392955404],
            [0.728492392955404, 0.008394777409958],
            [0.263112829634638, 0.008394777409958],
            [0.728492392955404, 0.263112829634638],
            [0.008394777409958, 0.728492392955404],
        ]),
        np.array([
            0.0721578038388935,
            0.0475458171336425,
            0.0475458171336425,
            0.0475458171336425,
            0.051608685267359,
            0.051608685267359,
            0.051608685267359,
            0.016229248811599,
            0.016229248811599,
            0.016229248811599,
            0.0136151570872175,
            0.0136151570872175,
            0.0136151570872175,
            0.0136151570872175,
            0.0136151570872175,
            0.0136151570872175,
        ]),
    ),
    9: (
        np.array([
            [0.333333333333333, 0.333333333333333],
            [0.020634961602525, 0.489682519198738],
            [0.489682519198738, 0.489682519198738],
            [0.489682519198738, 0.020634961602525],
            [0.125820817014127, 0.437089591492937],
            [0.437089591492937, 0.437089591492937],
            [0.437089591492937, 0.125820817014127],
            [0.623592928761935, 0.188203535619033],
            [0.188203535619033, 0.188203535619033],
            [0.188203535619033, 0.623592928761935],
            [0.910540973211095, 0.044729513394453],
            [0.044729513394453, 0.044729513394453],
            [0.044729513394453, 0.910540973211095],
            [0.036838412054736, 0.221962989160766],
            [0.221962989160766, 0.741198598784498],
            [0.741198598784498, 0.036838412054736],
            [0.221962989160766, 0.036838412054736],
            [0.741198598784498, 0.221962989160766],
            [0.036838412054736, 0.741198598784498],
        ]),
        np.array([
            0.0485678981413995,
            0.0156673501135695,
            0.0156673501135695,
            0.0156673501135695,
            0.038913770502387,
            0.038913770502387,
            0.038913770502387,
            0.039823869463605,
            0.039823869463605,
            0.039823869463605,
            0.012788837829349,
            0.012788837829349,
            0.012788837829349,
            0.0216417696886445,
            0.0216417696886445,
            0.0216417696886445,
            0.0216417696886445,
            0.0216417696886445,
            0.0216417696886445,
        ]),
    ),
    10: (
        np.array([
            [0.333333333333333, 0.333333333333333],
            [0.028844733232685, 0.485577633383657],
            [0.485577633383657, 0.485577633383657],
            [0.485577633383657, 0.028844733232685],
            [0.781036849029926, 0.109481575485037],
            [0.109481575485037, 0.109481575485037],
            [0.109481575485037, 0.781036849029926],
            [0.14170721941488, 0.307939838764121],
            [0.307939838764121, 0.550352941820999],
            [0.550352941820999, 0.14170721941488],
            [0.307939838764121, 0.14170721941488],
            [0.550352941820999, 0.307939838764121],
            [0.14170721941488, 0.550352941820999],
            [0.025003534762686, 0.246672560639903],
            [0.246672560639903, 0.728323904597411],
            [0.728323904597411, 0.025003534762686],
            [0.246672560639903, 0.025003534762686],
            [0.728323904597411, 0.246672560639903],
            [0.025003534762686, 0.728323904597411],
            [0.009540815400299, 0.0668032510122],
            [0.0668032510122, 0.9236559335875],
            [0.9236559335875, 0.009540815400299],
            [0.0668032510122, 0.009540815400299],
            [0.9236559335875, 0.0668032510122],
            [0.009540815400299, 0.9236559335875],
        ]),
        np.array([
            0.045408995191377,
            0.0183629788782335,
            0.0183629788782335,
            0.0183629788782335,
            0.022660529717764,
            0.022660529717764,
            0.022660529717764,
            0.03637895842271,
            0.03637895842271,
            0.03637895842271,
            0.03637895842271,
            0.03637895842271,
            0.03637895842271,
            0.0141636212655285,
            0.0141636212655285,
            0.0141636212655285,
            0.0141636212655285,
            0.0141636212655285,
            0.0141636212655285,
            0.0047108334818665,
            0.0047108334818665,
            0.0047108334818665,
            0.0047108334818665,
            0.0047108334818665,
            0.0047108334818665,
        ]),
    ),
    12: (
        np.array([
            [0.02356522045239, 0.488217389773805],
            [0.488217389773805, 0.488217389773805],
            [0.488217389773805, 0.02356522045239],
            [0.120551215411079, 0.43972439229446],
            [0.43972439229446, 0.43972439229446],
            [0.43972439229446, 0.120551215411079],
            [0.457579229975768, 0.271210385012116],
            [0.271210385012116, 0.271210385012116],
            [0.271210385012116, 0.457579229975768],
            [0.744847708916828, 0.127576145541586],
            [0.127576145541586, 0.127576145541586],
            [0.127576145541586, 0.744847708916828],
            [0.957365299093579, 0.02131735045321],
            [0.02131735045321, 0.02131735045321],
            [0.02131735045321, 0.957365299093579],
            [0.115343494534698, 0.275713269685514],
            [0.275713269685514, 0.608943235779788],
            [0.608943235779788, 0.115343494534698],
            [0.275713269685514, 0.115343494534698],
            [0.608943235779788, 0.275713269685514],
            [0.115343494534698, 0.608943235779788],
            [0.022838332222257, 0.28132558098994],
            [0.28132558098994, 0.695836086787803],
            [0.695836086787803, 0.022838332222257],
            [0.28132558098994, 0.022838332222257],
            [0.695836086787803, 0.28132558098994],
            [0.022838332222257, 0.695836086787803],
            [0.02573405054833, 0.116251915907597],
            [0.116251915907597, 0.858014033544073],
            [0.858014033544073, 0.02573405054833],
            [0.116251915907597, 0.02573405054833],
            [0.858014033544073, 0.116251915907597],
            [0.02573405054833, 0.858014033544073],
        ]),
        np.array([
            0.0128655332202275,
            0.0128655332202275,
            0.0128655332202275,
            0.021846272269019,
            0.021846272269019,
            0.021846272269019,
            0.0314291121089425,
            0.0314291121089425,
            0.0314291121089425,
            0.0173980564653545,
            0.0173980564653545,
            0.0173980564653545,
            0.0030831305257795,
            0.0030831305257795,
            0.0030831305257795,
            0.0201857788831905,
            0.0201857788831905,
            0.0201857788831905,
            0.0201857788831905,
            0.0201857788831905,
            0.0201857788831905,
            0.0111783866011515,
            0.0111783866011515,
            0.0111783866011515,
            0.0111783866011515,
            0.0111783866011515,
            0.0111783866011515,
            0.0086581155543295,
            0.0086581155543295,
            0.0086581155543295,
            0.0086581155543295,
            0.0086581155543295,
            0.0086581155543295,
        ]),
    ),
}

MAX_DEGREE = max(_TRI_RULES)


def rule_for_degree(degree):
    """Smallest tabulated rule with exactness >= degree."""
    if degree > MAX_DEGREE:
        raise ValueError(
            f"no tabulated triangle rule of exactness {degree} (max {MAX_DEGREE})"
        )
    d = max(degree, 1)
    while d not in _TRI_RULES:
        d += 1
    points, weights = _TRI_RULES[d]
    return points, weights, d
