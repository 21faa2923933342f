#include "mnbab/Mnc.h"

#include "mnbab/Relax.h"

#include <algorithm>
#include <cmath>

namespace mnbab {

std::vector<OctagonBounds> octahedralPairBounds( const VerificationProblem &problem,
                                                 unsigned layer,
                                                 const std::vector<std::pair<unsigned, unsigned>> &pairs,
                                                 const NeuronBounds &bounds )
{
    std::vector<OctagonBounds> result( pairs.size() );
    if ( pairs.empty() )
        return result;

    const ReluSite &site = problem.network.reluSite( layer );
    NeuronBounds earlier( bounds.begin(), bounds.begin() + layer );
    SplitMatrix splits = SplitMatrix::none( problem.network );
    MncSet none = MncSet::empty( problem.network );
    ParamLayout layout = ParamLayout::build( earlier, splits, none );
    DualParameters params = DualParameters::initial( layout, earlier );

    LinearExpression query;
    query.a = Eigen::MatrixXd::Zero( 2 * pairs.size(), site.width );
    query.c = Eigen::VectorXd::Zero( 2 * pairs.size() );
    for ( size_t p = 0; p < pairs.size(); ++p )
    {
        auto [j, k] = pairs[p];
        query.a( 2 * p, j ) = 1.0;
        query.a( 2 * p, k ) = 1.0;
        query.a( 2 * p + 1, j ) = 1.0;
        query.a( 2 * p + 1, k ) = -1.0;
    }

    Backsubstitution pass( earlier, splits, none, params );
    Eigen::VectorXd lower = concretize( pass.run( query, site.prefix, Side::LOWER ), problem.region, Side::LOWER );
    Eigen::VectorXd upper = concretize( pass.run( query, site.prefix, Side::UPPER ), problem.region, Side::UPPER );

    const LayerBounds &box = bounds[layer];
    for ( size_t p = 0; p < pairs.size(); ++p )
    {
        auto [j, k] = pairs[p];
        OctagonBounds &oct = result[p];
        oct.sumLower = std::max( lower[2 * p], box.lower[j] + box.lower[k] );
        oct.sumUpper = std::min( upper[2 * p], box.upper[j] + box.upper[k] );
        oct.diffLower = std::max( lower[2 * p + 1], box.lower[j] - box.upper[k] );
        oct.diffUpper = std::min( upper[2 * p + 1], box.upper[j] - box.lower[k] );
    }
    return result;
}

namespace {

struct HalfPlane
{
    Eigen::Vector2d normal;
    double offset;
};

std::vector<Eigen::Vector2d> clip( const std::vector<Eigen::Vector2d> &polygon, const HalfPlane &plane, double tolerance )
{
    std::vector<Eigen::Vector2d> result;
    const size_t n = polygon.size();
    for ( size_t i = 0; i < n; ++i )
    {
        const Eigen::Vector2d &current = polygon[i];
        const Eigen::Vector2d &next = polygon[( i + 1 ) % n];
        double currentValue = plane.normal.dot( current ) - plane.offset;
        double nextValue = plane.normal.dot( next ) - plane.offset;
        bool currentInside = currentValue <= tolerance;
        bool nextInside = nextValue <= tolerance;

        if ( currentInside )
            result.push_back( current );
        if ( currentInside != nextInside )
        {
            double t = currentValue / ( currentValue - nextValue );
            result.push_back( current + t * ( next - current ) );
        }
    }
    return result;
}

void addUnique( std::vector<Eigen::Vector2d> &points, const Eigen::Vector2d &point, double tolerance )
{
    for ( const auto &existing : points )
        if ( ( existing - point ).cwiseAbs().maxCoeff() <= tolerance )
            return;
    points.push_back( point );
}

double relu( double x )
{
    return x > 0.0 ? x : 0.0;
}

struct Row
{
    Eigen::Vector4d normal;
    double offset;
    double depth;
};

} // namespace

std::vector<Eigen::Vector2d> groupRegionPoints( const NeuronGroup &group )
{
    const double scale = std::max( { 1.0,
                                     std::abs( group.firstLower ),
                                     std::abs( group.firstUpper ),
                                     std::abs( group.secondLower ),
                                     std::abs( group.secondUpper ) } );
    const double tolerance = 1e-12 * scale;
    const OctagonBounds &oct = group.octagon;

    std::vector<Eigen::Vector2d> polygon = { { group.firstLower, group.secondLower },
                                             { group.firstUpper, group.secondLower },
                                             { group.firstUpper, group.secondUpper },
                                             { group.firstLower, group.secondUpper } };
    const HalfPlane planes[] = { { { 1.0, 1.0 }, oct.sumUpper },
                                 { { -1.0, -1.0 }, -oct.sumLower },
                                 { { 1.0, -1.0 }, oct.diffUpper },
                                 { { -1.0, 1.0 }, -oct.diffLower } };
    for ( const auto &plane : planes )
    {
        polygon = clip( polygon, plane, tolerance );
        if ( polygon.empty() )
            return {};
    }

    std::vector<Eigen::Vector2d> points;
    for ( const auto &vertex : polygon )
        addUnique( points, vertex, tolerance );

    const size_t n = polygon.size();
    for ( size_t i = 0; i < n; ++i )
    {
        const Eigen::Vector2d &p = polygon[i];
        const Eigen::Vector2d &q = polygon[( i + 1 ) % n];
        for ( int axis = 0; axis < 2; ++axis )
        {
            if ( ( p[axis] < 0.0 && q[axis] > 0.0 ) || ( p[axis] > 0.0 && q[axis] < 0.0 ) )
            {
                double t = p[axis] / ( p[axis] - q[axis] );
                Eigen::Vector2d crossing = p + t * ( q - p );
                crossing[axis] = 0.0;
                addUnique( points, crossing, tolerance );
            }
        }
    }

    bool originInside = oct.sumLower <= tolerance && oct.sumUpper >= -tolerance && oct.diffLower <= tolerance &&
                        oct.diffUpper >= -tolerance && group.firstLower <= 0.0 && group.firstUpper >= 0.0 &&
                        group.secondLower <= 0.0 && group.secondUpper >= 0.0;
    if ( originInside )
        addUnique( points, Eigen::Vector2d::Zero(), tolerance );
    return points;
}

std::vector<PairConstraint> pairHullConstraints( const NeuronGroup &group, unsigned maxFacets )
{
    std::vector<Eigen::Vector2d> region = groupRegionPoints( group );
    if ( region.empty() || maxFacets == 0 )
        return {};

    // Lift to (z_j, z_k, zhat_j, zhat_k).
    const Eigen::Index count = region.size();
    Eigen::MatrixXd points( count, 4 );
    for ( Eigen::Index i = 0; i < count; ++i )
        points.row( i ) << relu( region[i][0] ), relu( region[i][1] ), region[i][0], region[i][1];

    const double scale = std::max( 1.0, points.cwiseAbs().maxCoeff() );
    const double tolerance = 1e-9 * scale;

    Eigen::RowVector4d mean = points.colwise().mean();
    Eigen::MatrixXd centered = points.rowwise() - mean;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd( centered, Eigen::ComputeFullV );
    const Eigen::VectorXd &sigma = svd.singularValues();
    int dimension = 0;
    for ( Eigen::Index i = 0; i < sigma.size(); ++i )
        if ( sigma[i] > tolerance )
            ++dimension;

    const Eigen::MatrixXd basis = svd.matrixV().leftCols( dimension );
    std::vector<Eigen::Vector4d> normals;

    // Directions orthogonal to the affine hull give equalities.
    for ( int i = dimension; i < 4; ++i )
    {
        Eigen::Vector4d n = svd.matrixV().col( i );
        normals.push_back( n );
        normals.push_back( -n );
    }

    // Facets within the affine hull, by brute force over point subsets.
    if ( dimension >= 1 )
    {
        Eigen::MatrixXd projected = centered * basis;
        std::vector<int> subset( dimension );
        std::vector<bool> selector( count, false );
        std::fill( selector.begin(), selector.begin() + std::min<Eigen::Index>( dimension, count ), true );
        if ( count >= dimension )
        {
            do
            {
                int filled = 0;
                for ( Eigen::Index i = 0; i < count; ++i )
                    if ( selector[i] )
                        subset[filled++] = i;

                Eigen::VectorXd normal( dimension );
                if ( dimension == 1 )
                    normal << 1.0;
                else
                {
                    Eigen::MatrixXd differences( dimension - 1, dimension );
                    for ( int r = 1; r < dimension; ++r )
                        differences.row( r - 1 ) = projected.row( subset[r] ) - projected.row( subset[0] );
                    Eigen::JacobiSVD<Eigen::MatrixXd> local( differences, Eigen::ComputeFullV );
                    const Eigen::VectorXd &s = local.singularValues();
                    if ( s[dimension - 2] <= 1e-9 * std::max( 1.0, s[0] ) )
                        continue;
                    normal = local.matrixV().col( dimension - 1 );
                }

                Eigen::VectorXd values = projected * normal;
                double anchor = values[subset[0]];
                if ( values.maxCoeff() <= anchor + tolerance )
                    normals.push_back( basis * normal );
                else if ( values.minCoeff() >= anchor - tolerance )
                    normals.push_back( -( basis * normal ) );
            } while ( std::prev_permutation( selector.begin(), selector.end() ) );
        }
    }

    const double lj = group.firstLower, uj = group.firstUpper;
    const double lk = group.secondLower, uk = group.secondUpper;
    auto triangleUpper = []( double x, double l, double u ) { return u * ( x - l ) / ( u - l ); };

    std::vector<Row> rows;
    for ( Eigen::Vector4d normal : normals )
    {
        double size = normal.cwiseAbs().maxCoeff();
        if ( size <= 1e-12 )
            continue;
        normal /= size;
        // The offset is the support value, so each row holds on every point.
        double offset = ( points * normal ).maxCoeff();

        // Largest value of the row over the two triangle relaxations on the
        // region; it is piecewise linear with kinks on the axes, so the
        // region points suffice.
        double relaxed = -std::numeric_limits<double>::infinity();
        for ( const auto &v : region )
        {
            double value = normal[2] * v[0] + normal[3] * v[1];
            value += normal[0] >= 0.0 ? normal[0] * triangleUpper( v[0], lj, uj ) : normal[0] * relu( v[0] );
            value += normal[1] >= 0.0 ? normal[1] * triangleUpper( v[1], lk, uk ) : normal[1] * relu( v[1] );
            relaxed = std::max( relaxed, value );
        }
        double depth = relaxed - offset;
        if ( depth <= tolerance )
            continue;

        bool duplicate = false;
        for ( auto &existing : rows )
        {
            if ( ( existing.normal - normal ).cwiseAbs().maxCoeff() <= 1e-7 &&
                 std::abs( existing.offset - offset ) <= 1e-7 )
            {
                existing.offset = std::max( existing.offset, offset );
                duplicate = true;
                break;
            }
        }
        if ( !duplicate )
            rows.push_back( Row{ normal, offset, depth } );
    }

    std::stable_sort( rows.begin(), rows.end(), []( const Row &a, const Row &b ) { return a.depth > b.depth; } );
    if ( rows.size() > maxFacets )
        rows.resize( maxFacets );

    std::vector<PairConstraint> result;
    for ( const auto &row : rows )
        result.push_back( PairConstraint{ row.normal.head<2>(), row.normal.tail<2>(), row.offset } );
    return result;
}

std::vector<std::pair<unsigned, unsigned>> selectPairs( const LayerBounds &bounds, unsigned maxPairs )
{
    std::vector<unsigned> unstable;
    for ( unsigned j = 0; j < bounds.lower.size(); ++j )
        if ( bounds.isUnstable( j ) )
            unstable.push_back( j );

    auto area = [&]( unsigned j ) {
        double l = bounds.lower[j], u = bounds.upper[j];
        return u * -l / ( u - l );
    };

    struct Candidate
    {
        double score;
        unsigned first, second;
    };
    std::vector<Candidate> candidates;
    for ( size_t a = 0; a < unstable.size(); ++a )
        for ( size_t b = a + 1; b < unstable.size(); ++b )
            candidates.push_back( Candidate{ area( unstable[a] ) * area( unstable[b] ), unstable[a], unstable[b] } );

    size_t keep = std::min<size_t>( maxPairs, candidates.size() );
    std::partial_sort( candidates.begin(),
                       candidates.begin() + keep,
                       candidates.end(),
                       []( const Candidate &x, const Candidate &y ) {
                           if ( x.score != y.score )
                               return x.score > y.score;
                           if ( x.first != y.first )
                               return x.first < y.first;
                           return x.second < y.second;
                       } );

    std::vector<std::pair<unsigned, unsigned>> pairs;
    for ( size_t i = 0; i < keep; ++i )
        pairs.emplace_back( candidates[i].first, candidates[i].second );
    return pairs;
}

MncSet generateMnc( const VerificationProblem &problem, const NeuronBounds &bounds, const MncConfig &config )
{
    MncSet set = MncSet::empty( problem.network );
    if ( !config.enabled || config.maxPairsPerLayer == 0 )
        return set;

    for ( unsigned i = 0; i < bounds.size(); ++i )
    {
        const LayerBounds &box = bounds[i];
        auto pairs = selectPairs( box, config.maxPairsPerLayer );
        if ( pairs.empty() )
            continue;
        auto octagons = octahedralPairBounds( problem, i, pairs, bounds );

        std::vector<std::pair<std::pair<unsigned, unsigned>, PairConstraint>> rows;
        for ( size_t p = 0; p < pairs.size(); ++p )
        {
            NeuronGroup group;
            group.layer = i;
            group.first = pairs[p].first;
            group.second = pairs[p].second;
            group.firstLower = box.lower[group.first];
            group.firstUpper = box.upper[group.first];
            group.secondLower = box.lower[group.second];
            group.secondUpper = box.upper[group.second];
            group.octagon = octagons[p];
            for ( const auto &constraint : pairHullConstraints( group, config.maxFacetsPerPair ) )
                rows.emplace_back( pairs[p], constraint );
        }

        const unsigned width = box.lower.size();
        MncLayer &layer = set.layers[i];
        layer.post = Eigen::MatrixXd::Zero( rows.size(), width );
        layer.pre = Eigen::MatrixXd::Zero( rows.size(), width );
        layer.offset = Eigen::VectorXd( rows.size() );
        for ( size_t r = 0; r < rows.size(); ++r )
        {
            auto [pair, constraint] = rows[r];
            layer.post( r, pair.first ) = constraint.post[0];
            layer.post( r, pair.second ) = constraint.post[1];
            layer.pre( r, pair.first ) = constraint.pre[0];
            layer.pre( r, pair.second ) = constraint.pre[1];
            layer.offset[r] = constraint.offset;
        }
    }
    return set;
}

} // namespace mnbab
