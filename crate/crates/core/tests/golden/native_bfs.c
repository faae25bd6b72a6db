/* native kernel for forest c99bae9fd350b82ea6772827564503d2be42ec8d1daddd632123483666f0ea18 */
#include <stdint.h>

#define SKT_N_FEATURES 10
#define SKT_N_CLASSES 2
#define SKT_N_TREES 3

int32_t skt_predict(const double *x);

/* leaves store -1 - class in `left` */
typedef struct {
    double threshold;
    int32_t feature;
    int32_t left;
    int32_t right;
} skt_node;

/* layout: bfs_default */
static const skt_node skt_nodes[] = {
    /* tree 0 */
    {-0.5822423687211052, 0, 1, 2},
    {9.771748934071, 2, 3, 4},
    {11.607116370873023, 2, 5, 6},
    {6.2681942559430395, 5, 7, 8},
    {0.0, 0, -2, -1},
    {0.0, 0, -2, -1},
    {0.0, 0, -1, -1},
    {1.9803339663648762, 1, 9, 10},
    {0.0, 0, -1, -1},
    {0.0, 0, -1, -1},
    {0.0, 0, -2, -1},
    /* tree 1 */
    {0.4952118926022063, 1, 12, 13},
    {0.0, 0, -1, -1},
    {9.87667553927795, 8, 14, 15},
    {0.0, 0, -2, -1},
    {0.0, 0, -1, -1},
    /* tree 2 */
    {-1.036550989019246, 0, 17, 18},
    {0.0, 0, -1, -1},
    {1.4508643807541866, 1, 19, 20},
    {5.421540740952604, 2, 21, 22},
    {9.969334725519545, 8, 23, 24},
    {0.0, 0, -2, -1},
    {0.0, 0, -1, -1},
    {0.0, 0, -2, -1},
    {0.0, 0, -1, -1},
};

static const int32_t skt_roots[SKT_N_TREES] = {0, 11, 16};

int32_t skt_predict(const double *x)
{
    int32_t votes[SKT_N_CLASSES] = {0};
    int32_t best;
    int32_t c;
    int32_t t;
    for (t = 0; t < SKT_N_TREES; ++t) {
        const skt_node *n = &skt_nodes[skt_roots[t]];
        while (n->left >= 0) {
            n = &skt_nodes[x[n->feature] <= n->threshold ? n->left : n->right];
        }
        votes[-1 - n->left] += 1;
    }
    best = 0;
    for (c = 1; c < SKT_N_CLASSES; ++c) {
        if (votes[c] > votes[best]) {
            best = c;
        }
    }
    return best;
}
